/** Linear-chain CRF layer over per-token emission scores.
 *
 * Scores a tag sequence as sum of emissions plus transition weights
 * (including start/end transitions). Training minimizes the negative
 * log-likelihood via forward-backward marginals; decoding is Viterbi.
 */

export interface CrfParams {
  transitions: Float64Array; // [K*K], transitions[prev*K + next]
  start: Float64Array; // [K]
  end: Float64Array; // [K]
}

function logSumExp(values: Float64Array): number {
  let max = -Infinity;
  for (const v of values) if (v > max) max = v;
  if (max === -Infinity) return -Infinity;
  let sum = 0;
  for (const v of values) sum += Math.exp(v - max);
  return max + Math.log(sum);
}

export interface CrfGradients {
  dEmissions: Float64Array[]; // per token [K]
  dTransitions: Float64Array;
  dStart: Float64Array;
  dEnd: Float64Array;
}

/** NLL of the gold path plus gradients w.r.t. emissions and transitions. */
export function crfLossAndGrads(
  emissions: Float64Array[],
  gold: number[],
  params: CrfParams,
  K: number,
): { loss: number; grads: CrfGradients } {
  const n = emissions.length;
  const { transitions, start, end } = params;

  // Forward pass in log space: alpha[t][k] = log sum over paths ending in
  // k at t.
  const alpha: Float64Array[] = [];
  let prev = new Float64Array(K);
  for (let k = 0; k < K; k++) prev[k] = start[k] + emissions[0][k];
  alpha.push(prev);
  const work = new Float64Array(K);
  for (let t = 1; t < n; t++) {
    const next = new Float64Array(K);
    for (let k = 0; k < K; k++) {
      for (let j = 0; j < K; j++) work[j] = prev[j] + transitions[j * K + k];
      next[k] = logSumExp(work) + emissions[t][k];
    }
    alpha.push(next);
    prev = next;
  }
  for (let k = 0; k < K; k++) work[k] = prev[k] + end[k];
  const logZ = logSumExp(work);

  // Backward pass: beta[t][k] = log sum over paths from k at t to the end.
  const beta: Float64Array[] = new Array(n);
  let after = new Float64Array(K);
  for (let k = 0; k < K; k++) after[k] = end[k];
  beta[n - 1] = after;
  for (let t = n - 2; t >= 0; t--) {
    const current = new Float64Array(K);
    for (let j = 0; j < K; j++) {
      for (let k = 0; k < K; k++) {
        work[k] = transitions[j * K + k] + emissions[t + 1][k] + after[k];
      }
      current[j] = logSumExp(work);
    }
    beta[t] = current;
    after = current;
  }

  // Gold path score.
  let goldScore = start[gold[0]] + emissions[0][gold[0]];
  for (let t = 1; t < n; t++) {
    goldScore += transitions[gold[t - 1] * K + gold[t]] + emissions[t][gold[t]];
  }
  goldScore += end[gold[n - 1]];
  const loss = logZ - goldScore;

  // Gradients: marginals minus gold indicators.
  const dEmissions: Float64Array[] = [];
  for (let t = 0; t < n; t++) {
    const d = new Float64Array(K);
    for (let k = 0; k < K; k++) {
      d[k] = Math.exp(alpha[t][k] + beta[t][k] - logZ);
    }
    d[gold[t]] -= 1;
    dEmissions.push(d);
  }
  const dTransitions = new Float64Array(K * K);
  for (let t = 1; t < n; t++) {
    for (let j = 0; j < K; j++) {
      for (let k = 0; k < K; k++) {
        const logMarginal =
          alpha[t - 1][j] + transitions[j * K + k] + emissions[t][k] + beta[t][k] - logZ;
        dTransitions[j * K + k] += Math.exp(logMarginal);
      }
    }
    dTransitions[gold[t - 1] * K + gold[t]] -= 1;
  }
  const dStart = new Float64Array(K);
  const dEnd = new Float64Array(K);
  for (let k = 0; k < K; k++) {
    dStart[k] = Math.exp(alpha[0][k] + beta[0][k] - logZ);
    dEnd[k] = Math.exp(alpha[n - 1][k] + end[k] - logZ);
  }
  // alpha already contains end emissions; dEnd needs the final-position
  // marginal, which equals exp(alpha[n-1] + end - logZ).
  dStart[gold[0]] -= 1;
  dEnd[gold[n - 1]] -= 1;
  return { loss, grads: { dEmissions, dTransitions, dStart, dEnd } };
}

/** Best-scoring tag path. */
export function viterbi(
  emissions: Float64Array[],
  params: CrfParams,
  K: number,
): number[] {
  const n = emissions.length;
  const { transitions, start, end } = params;
  const score = new Float64Array(K);
  for (let k = 0; k < K; k++) score[k] = start[k] + emissions[0][k];
  const backpointers: Int32Array[] = [];
  for (let t = 1; t < n; t++) {
    const next = new Float64Array(K);
    const back = new Int32Array(K);
    for (let k = 0; k < K; k++) {
      let best = -Infinity;
      let arg = 0;
      for (let j = 0; j < K; j++) {
        const s = score[j] + transitions[j * K + k];
        if (s > best) {
          best = s;
          arg = j;
        }
      }
      next[k] = best + emissions[t][k];
      back[k] = arg;
    }
    backpointers.push(back);
    score.set(next);
  }
  let best = -Infinity;
  let last = 0;
  for (let k = 0; k < K; k++) {
    const s = score[k] + end[k];
    if (s > best) {
      best = s;
      last = k;
    }
  }
  const path = [last];
  for (let t = backpointers.length - 1; t >= 0; t--) {
    last = backpointers[t][last];
    path.push(last);
  }
  path.reverse();
  return path;
}

/** Adam optimizer over named flat parameter arrays. */

export interface AdamOptions {
  lr: number;
  beta1: number;
  beta2: number;
  eps: number;
}

export const ADAM_DEFAULTS: AdamOptions = { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 };

export class Adam {
  private readonly m = new Map<string, Float64Array>();
  private readonly v = new Map<string, Float64Array>();
  private t = 0;
  readonly options: AdamOptions;

  constructor(options: Partial<AdamOptions> = {}) {
    this.options = { ...ADAM_DEFAULTS, ...options };
  }

  /** One update step over matching param/grad arrays. */
  step(params: Map<string, Float64Array>, grads: Map<string, Float64Array>): void {
    this.t += 1;
    const { lr, beta1, beta2, eps } = this.options;
    const correction1 = 1 - Math.pow(beta1, this.t);
    const correction2 = 1 - Math.pow(beta2, this.t);
    for (const [name, param] of params) {
      const grad = grads.get(name);
      if (!grad) continue;
      let m = this.m.get(name);
      let v = this.v.get(name);
      if (!m) {
        m = new Float64Array(param.length);
        v = new Float64Array(param.length);
        this.m.set(name, m);
        this.v.set(name, v!);
      }
      const vv = v!;
      for (let i = 0; i < param.length; i++) {
        const g = grad[i];
        m[i] = beta1 * m[i] + (1 - beta1) * g;
        vv[i] = beta2 * vv[i] + (1 - beta2) * g * g;
        const mHat = m[i] / correction1;
        const vHat = vv[i] / correction2;
        param[i] -= (lr * mHat) / (Math.sqrt(vHat) + eps);
      }
    }
  }
}

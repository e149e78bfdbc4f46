/**
 * Minimal reverse-mode tape: enough autograd to park the transport loss
 * inside a differentiable host graph (parameters -> softmax -> loss).
 */

export class Tensor {
  data: Float64Array;
  readonly shape: readonly number[];
  grad: Float64Array | null = null;
  requiresGrad: boolean;
  /** parent nodes this tensor was computed from */
  readonly prev: readonly Tensor[];
  /** accumulates this node's grad into its parents' grads */
  backwardFn: (() => void) | null = null;
  /** buffers a node keeps alive for its backward (tape memory accounting) */
  saved: Float64Array[] = [];

  constructor(
    data: Float64Array,
    shape: readonly number[],
    opts: { requiresGrad?: boolean; prev?: readonly Tensor[] } = {},
  ) {
    this.data = data;
    this.shape = shape;
    this.requiresGrad = opts.requiresGrad ?? false;
    this.prev = opts.prev ?? [];
  }

  get size(): number {
    return this.shape.reduce((a, b) => a * b, 1);
  }

  static fromArray(values: number[], opts: { requiresGrad?: boolean } = {}): Tensor {
    return new Tensor(Float64Array.from(values), [values.length], opts);
  }

  ensureGrad(): Float64Array {
    if (this.grad === null) {
      this.grad = new Float64Array(this.size);
    }
    return this.grad;
  }

  /** Reverse-topological sweep seeding d(self)/d(self) = 1. */
  backward(): void {
    if (this.size !== 1) {
      throw new Error("backward() expects a scalar root");
    }
    const order: Tensor[] = [];
    const seen = new Set<Tensor>();
    const visit = (t: Tensor) => {
      if (seen.has(t)) return;
      seen.add(t);
      for (const p of t.prev) visit(p);
      order.push(t);
    };
    visit(this);
    this.ensureGrad().fill(1);
    for (let k = order.length - 1; k >= 0; k--) {
      order[k].backwardFn?.();
    }
  }
}

/** softmax over a vector; classic stable form with max extraction */
export function softmax(x: Tensor): Tensor {
  const n = x.size;
  const out = new Float64Array(n);
  let max = -Infinity;
  for (const v of x.data) max = Math.max(max, v);
  let total = 0;
  for (let i = 0; i < n; i++) {
    out[i] = Math.exp(x.data[i] - max);
    total += out[i];
  }
  for (let i = 0; i < n; i++) out[i] /= total;

  const result = new Tensor(out, x.shape, {
    requiresGrad: x.requiresGrad,
    prev: [x],
  });
  if (x.requiresGrad) {
    result.saved.push(out);
    result.backwardFn = () => {
      const g = result.grad!;
      let dot = 0;
      for (let i = 0; i < n; i++) dot += g[i] * out[i];
      const xg = x.ensureGrad();
      for (let i = 0; i < n; i++) {
        xg[i] += out[i] * (g[i] - dot);
      }
    };
  }
  return result;
}

/** sum of all entries -> scalar */
export function sum(x: Tensor): Tensor {
  let total = 0;
  for (const v of x.data) total += v;
  const result = new Tensor(Float64Array.of(total), [1], {
    requiresGrad: x.requiresGrad,
    prev: [x],
  });
  if (x.requiresGrad) {
    result.backwardFn = () => {
      const g = result.grad![0];
      const xg = x.ensureGrad();
      for (let i = 0; i < xg.length; i++) xg[i] += g;
    };
  }
  return result;
}

/** Nodes reachable from `root` and the bytes their backward state pins. */
export function graphStats(root: Tensor): { nodes: number; savedBytes: number } {
  const seen = new Set<Tensor>();
  let savedBytes = 0;
  const visit = (t: Tensor) => {
    if (seen.has(t)) return;
    seen.add(t);
    for (const buf of t.saved) savedBytes += buf.byteLength;
    for (const p of t.prev) visit(p);
  };
  visit(root);
  return { nodes: seen.size, savedBytes };
}

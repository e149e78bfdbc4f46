/**
 * Differentiable transport-loss node.
 *
 * Forward delegates every solve to the solver process through the FFI
 * boundary and stashes only the final log potentials; backward turns those
 * potentials into mean-zero gradients without re-running anything. The
 * custom node cuts the host tape here, so graph memory does not grow with
 * the iteration count.
 */

import { Tensor } from "./autograd.js";
import {
  STATUS_OK,
  TensorView,
  sinkhorn_backward_v1,
  sinkhorn_forward_v1,
} from "./ffi.js";

export interface SinkhornLossOptions {
  lambda: number;
  maxIters?: number;
  tolerance?: number;
}

export interface CostMatrix {
  data: Float64Array;
  rows: number;
  cols: number;
}

export function costMatrixFromRows(rows: number[][]): CostMatrix {
  const r = rows.length;
  const c = rows[0].length;
  const data = new Float64Array(r * c);
  for (let i = 0; i < r; i++) {
    for (let j = 0; j < c; j++) data[i * c + j] = rows[i][j];
  }
  return { data, rows: r, cols: c };
}

function asBatch(t: Tensor): { data: Float64Array; B: number; d: number } {
  if (t.shape.length === 1) {
    return { data: t.data, B: 1, d: t.shape[0] };
  }
  if (t.shape.length === 2) {
    return { data: t.data, B: t.shape[0], d: t.shape[1] };
  }
  throw new Error(`histograms must be 1-D or 2-D, got shape [${t.shape}]`);
}

function view(data: Float64Array, shape: number[]): TensorView {
  return { data, shape };
}

/**
 * Per-lane transport loss of (mu, nu) batches under a shared cost matrix.
 * Returns a (B,) tensor; gradients flow to whichever inputs require them.
 */
export function sinkhornLoss(
  mu: Tensor,
  nu: Tensor,
  cost: CostMatrix,
  opts: SinkhornLossOptions,
): Tensor {
  const { data: muData, B, d: d1 } = asBatch(mu);
  const { data: nuData, B: Bnu, d: d2 } = asBatch(nu);
  if (B !== Bnu) {
    throw new Error(`batch sizes differ: mu has ${B}, nu has ${Bnu}`);
  }
  if (cost.rows !== d1 || cost.cols !== d2) {
    throw new Error(
      `cost is ${cost.rows}x${cost.cols} but histograms have d1=${d1}, d2=${d2}`,
    );
  }
  const lambda = opts.lambda;
  const maxIters = opts.maxIters ?? 1000;
  const tolerance = opts.tolerance ?? 0;

  const outCost = new Float64Array(B);
  const logU = new Float64Array(B * d1);
  const logV = new Float64Array(B * d2);
  const status = sinkhorn_forward_v1(
    view(muData, [B, d1]),
    view(nuData, [B, d2]),
    view(cost.data, [cost.rows, cost.cols]),
    lambda,
    maxIters,
    tolerance,
    view(outCost, [B]),
    view(logU, [B, d1]),
    view(logV, [B, d2]),
  );
  if (status !== STATUS_OK) {
    throw new Error(`forward failed with status ${status}`);
  }

  const requiresGrad = mu.requiresGrad || nu.requiresGrad;
  const result = new Tensor(outCost, [B], {
    requiresGrad,
    prev: [mu, nu],
  });
  if (requiresGrad) {
    // the complete backward state: final potentials only
    result.saved.push(logU, logV);
    result.backwardFn = () => {
      const upstream = result.grad!;
      const gradMu = new Float64Array(B * d1);
      const gradNu = new Float64Array(B * d2);
      const bstatus = sinkhorn_backward_v1(
        view(logU, [B, d1]),
        view(logV, [B, d2]),
        lambda,
        view(upstream, [B]),
        view(gradMu, [B, d1]),
        view(gradNu, [B, d2]),
      );
      if (bstatus !== STATUS_OK) {
        throw new Error(`backward failed with status ${bstatus}`);
      }
      if (mu.requiresGrad) {
        const g = mu.ensureGrad();
        for (let i = 0; i < g.length; i++) g[i] += gradMu[i];
      }
      if (nu.requiresGrad) {
        const g = nu.ensureGrad();
        for (let i = 0; i < g.length; i++) g[i] += gradNu[i];
      }
    };
  }
  return result;
}

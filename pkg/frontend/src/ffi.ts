/**
 * FFI-style boundary to the batched solver.
 *
 * The calling convention mirrors a C ABI: callers pass views into
 * contiguous row-major Float64Array buffers together with explicit shapes,
 * outputs are written in place, and the return value is an integer status
 * code. No exceptions cross this boundary for contract errors. Entry
 * points carry a _v1 suffix; the backward state is exactly the final log
 * potentials, so backward never re-runs the iteration.
 */

import { decodeLogRow, runCompute } from "./runner.js";

/** View into a caller-provided contiguous buffer, row-major. */
export interface TensorView {
  data: Float64Array;
  shape: readonly number[];
  offset?: number;
}

export const STATUS_OK = 0;
export const STATUS_SHAPE_MISMATCH = 10;
export const STATUS_INVALID_HISTOGRAM = 11;
export const STATUS_NON_FINITE_OUTPUT = 12;
export const STATUS_ZERO_MASS_LANE = 13;

const MASS_TOLERANCE = 1e-6;

function sizeOf(shape: readonly number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

function viewOk(view: TensorView, shape: readonly number[]): boolean {
  if (view.shape.length !== shape.length) return false;
  if (!view.shape.every((s, k) => s === shape[k])) return false;
  const offset = view.offset ?? 0;
  return offset >= 0 && offset + sizeOf(shape) <= view.data.length;
}

function rowsOf(view: TensorView, rows: number, cols: number): number[][] {
  const offset = view.offset ?? 0;
  const out: number[][] = [];
  for (let b = 0; b < rows; b++) {
    const row: number[] = new Array(cols);
    for (let i = 0; i < cols; i++) {
      row[i] = view.data[offset + b * cols + i];
    }
    out.push(row);
  }
  return out;
}

function validHistogramRows(rows: number[][]): boolean {
  for (const row of rows) {
    let total = 0;
    for (const x of row) {
      if (!Number.isFinite(x) || x < 0) return false;
      total += x;
    }
    if (Math.abs(total - 1) > MASS_TOLERANCE) return false;
  }
  return true;
}

function writeRow(view: TensorView, b: number, cols: number, row: number[]): void {
  const offset = (view.offset ?? 0) + b * cols;
  for (let i = 0; i < cols; i++) {
    view.data[offset + i] = row[i];
  }
}

/**
 * Solve B histogram pairs against one cost matrix and fill per-lane
 * transport costs plus the final log potentials (the complete backward
 * state).
 *
 * Shapes: mu (B, d1), nu (B, d2), cost (d1, d2), outCost (B,),
 * outLogU (B, d1), outLogV (B, d2).
 */
export function sinkhorn_forward_v1(
  mu: TensorView,
  nu: TensorView,
  cost: TensorView,
  lambda: number,
  maxIters: number,
  tolerance: number,
  outCost: TensorView,
  outLogU: TensorView,
  outLogV: TensorView,
): number {
  if (mu.shape.length !== 2 || nu.shape.length !== 2 || cost.shape.length !== 2) {
    return STATUS_SHAPE_MISMATCH;
  }
  const [B, d1] = mu.shape;
  const d2 = nu.shape[1];
  if (
    !viewOk(mu, [B, d1]) ||
    !viewOk(nu, [B, d2]) ||
    nu.shape[0] !== B ||
    !viewOk(cost, [d1, d2]) ||
    !viewOk(outCost, [B]) ||
    !viewOk(outLogU, [B, d1]) ||
    !viewOk(outLogV, [B, d2])
  ) {
    return STATUS_SHAPE_MISMATCH;
  }
  if (B === 0) {
    return STATUS_OK;
  }

  const muRows = rowsOf(mu, B, d1);
  const nuRows = rowsOf(nu, B, d2);
  if (!validHistogramRows(muRows) || !validHistogramRows(nuRows)) {
    return STATUS_INVALID_HISTOGRAM;
  }

  const report = runCompute(
    { mu: muRows, nu: nuRows, cost: rowsOf(cost, d1, d2) },
    { lambda, maxIters, tolerance },
    { potentials: true },
  );

  const potentials = report.potentials!;
  for (let b = 0; b < B; b++) {
    const value = report.cost_e0[b];
    if (value === null || !Number.isFinite(value)) {
      return STATUS_NON_FINITE_OUTPUT;
    }
    outCost.data[(outCost.offset ?? 0) + b] = value;
    writeRow(outLogU, b, d1, decodeLogRow(potentials.log_u[b]));
    writeRow(outLogV, b, d2, decodeLogRow(potentials.log_v[b]));
  }
  return STATUS_OK;
}

/**
 * Mean-zero gradients per lane from the stored potentials, scaled by the
 * upstream cotangent. O(B * (d1 + d2)) arithmetic, entirely host-side.
 *
 * Shapes: logU (B, d1), logV (B, d2), upstream (B,), outGradMu (B, d1),
 * outGradNu (B, d2).
 */
export function sinkhorn_backward_v1(
  logU: TensorView,
  logV: TensorView,
  lambda: number,
  upstream: TensorView,
  outGradMu: TensorView,
  outGradNu: TensorView,
): number {
  if (logU.shape.length !== 2 || logV.shape.length !== 2) {
    return STATUS_SHAPE_MISMATCH;
  }
  const [B, d1] = logU.shape;
  const d2 = logV.shape[1];
  if (
    logV.shape[0] !== B ||
    !viewOk(logU, [B, d1]) ||
    !viewOk(logV, [B, d2]) ||
    !viewOk(upstream, [B]) ||
    !viewOk(outGradMu, [B, d1]) ||
    !viewOk(outGradNu, [B, d2])
  ) {
    return STATUS_SHAPE_MISMATCH;
  }

  const sides: Array<[TensorView, number, TensorView]> = [
    [logU, d1, outGradMu],
    [logV, d2, outGradNu],
  ];
  for (const [pot, d, out] of sides) {
    const base = pot.offset ?? 0;
    for (let b = 0; b < B; b++) {
      let mean = 0;
      for (let i = 0; i < d; i++) {
        const x = pot.data[base + b * d + i];
        if (x === Number.NEGATIVE_INFINITY) {
          return STATUS_ZERO_MASS_LANE;
        }
        mean += x;
      }
      mean /= d;
      const scale = upstream.data[(upstream.offset ?? 0) + b] * lambda;
      const outBase = (out.offset ?? 0) + b * d;
      for (let i = 0; i < d; i++) {
        out.data[outBase + i] = scale * (pot.data[base + b * d + i] - mean);
      }
    }
  }
  return STATUS_OK;
}

export {
  STATUS_OK,
  STATUS_SHAPE_MISMATCH,
  STATUS_INVALID_HISTOGRAM,
  STATUS_NON_FINITE_OUTPUT,
  STATUS_ZERO_MASS_LANE,
  sinkhorn_forward_v1,
  sinkhorn_backward_v1,
} from "./ffi.js";
export type { TensorView } from "./ffi.js";
export { Tensor, softmax, sum, graphStats } from "./autograd.js";
export { sinkhornLoss, costMatrixFromRows } from "./loss.js";
export type { CostMatrix, SinkhornLossOptions } from "./loss.js";
export { runCli, runCompute, decodeLogRow } from "./runner.js";
export type { ComputeReport, SolverOptions } from "./runner.js";

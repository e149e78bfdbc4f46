/**
 * Process-boundary transport to the solver: writes a JSON instance bundle,
 * invokes the `sinkloss` CLI, parses the JSON report back.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export interface SolverOptions {
  lambda: number;
  maxIters: number;
  tolerance: number;
  workers?: number;
}

export interface ComputeReport {
  schema: number;
  cost_e0: number[];
  iterations_run: number;
  residuals: number[];
  converged: boolean[];
  potentials?: { log_u: (number | null)[][]; log_v: (number | null)[][] };
  gradients?: { mu: number[][]; nu: number[][] };
}

function pythonExecutable(): string {
  return process.env.SINKLOSS_PYTHON ?? "python3";
}

/** JSON null stands in for -inf (JSON has no -Infinity literal). */
export function decodeLogRow(row: (number | null)[]): number[] {
  return row.map((x) => (x === null ? Number.NEGATIVE_INFINITY : x));
}

export function runCompute(
  bundle: { mu: number[][]; nu: number[][]; cost: number[][] },
  opts: SolverOptions,
  emit: { potentials?: boolean; gradients?: boolean } = {},
): ComputeReport {
  const dir = mkdtempSync(join(tmpdir(), "sinkloss-"));
  try {
    const bundlePath = join(dir, "instance.json");
    const reportPath = join(dir, "report.json");
    writeFileSync(bundlePath, JSON.stringify(bundle), "utf-8");

    const argv = [
      "-m", "sinkloss", "compute",
      "--mu", bundlePath,
      "--lambda", String(opts.lambda),
      "--max-iters", String(opts.maxIters),
      "--tol", String(opts.tolerance),
      "--out", reportPath,
    ];
    if (opts.workers !== undefined) {
      argv.push("--workers", String(opts.workers));
    }
    if (emit.potentials) {
      argv.push("--emit-potentials");
    }
    if (emit.gradients) {
      argv.push("--emit-gradients");
    }

    const proc = spawnSync(pythonExecutable(), argv, { encoding: "utf-8" });
    if (proc.error) {
      throw proc.error;
    }
    // exit 2 (non-convergence under a nonzero tolerance) still carries a
    // complete report; anything else is a contract violation upstream
    if (proc.status !== 0 && proc.status !== 2) {
      throw new Error(
        `solver exited with code ${proc.status}: ${proc.stderr.trim()}`,
      );
    }
    return JSON.parse(readFileSync(reportPath, "utf-8")) as ComputeReport;
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

/** Run an arbitrary CLI subcommand; used by tests for cross-interface parity. */
export function runCli(argv: string[]): {
  status: number | null;
  stdout: string;
  stderr: string;
} {
  const proc = spawnSync(pythonExecutable(), ["-m", "sinkloss", ...argv], {
    encoding: "utf-8",
  });
  if (proc.error) {
    throw proc.error;
  }
  return { status: proc.status, stdout: proc.stdout, stderr: proc.stderr };
}

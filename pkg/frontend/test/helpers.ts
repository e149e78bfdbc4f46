/** Deterministic helpers for tests: seeded PRNG, instance builders. */

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** strictly positive random histogram, masses bounded away from zero */
export function randomHistogram(d: number, rand: () => number): number[] {
  const m = Array.from({ length: d }, () => 0.5 + rand());
  const total = m.reduce((a, b) => a + b, 0);
  return m.map((x) => x / total);
}

/** |i-j|^p / (d-1)^p on the index grid */
export function gridCostRows(d: number, power = 2): number[][] {
  const denom = Math.max(d - 1, 1);
  return Array.from({ length: d }, (_, i) =>
    Array.from({ length: d }, (_, j) => Math.abs(i - j) ** power / denom ** power),
  );
}

export function flatten(rows: number[][]): Float64Array {
  const r = rows.length;
  const c = rows[0].length;
  const out = new Float64Array(r * c);
  for (let i = 0; i < r; i++) {
    for (let j = 0; j < c; j++) out[i * c + j] = rows[i][j];
  }
  return out;
}

export function maxAbsDiff(a: ArrayLike<number>, b: ArrayLike<number>): number {
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    worst = Math.max(worst, Math.abs(a[i] - b[i]));
  }
  return worst;
}

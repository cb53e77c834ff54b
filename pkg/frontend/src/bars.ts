/** Geometry for the signed latent bar rows. Eight dimensions are few
 * enough to read directly, so each value becomes one bar around a zero
 * baseline; all rows share one scale so style and clean style compare. */

export interface Bar {
  frac: number;
  negative: boolean;
}

export function sharedScale(rows: readonly (readonly number[])[]): number {
  let scale = 0;
  for (const row of rows) {
    for (const v of row) scale = Math.max(scale, Math.abs(v));
  }
  return scale;
}

/** Bar lengths as fractions of `scale`; a zero scale renders a flat row. */
export function signedBars(values: readonly number[], scale: number): Bar[] {
  if (scale <= 0) return values.map(() => ({ frac: 0, negative: false }));
  return values.map((v) => ({
    frac: Math.min(1, Math.abs(v) / scale),
    negative: v < 0,
  }));
}

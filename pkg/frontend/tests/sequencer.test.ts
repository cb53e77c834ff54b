import { describe, expect, it } from "vitest";
import { Sequencer } from "../src/sequencer";

function permutations<T>(items: T[]): T[][] {
  if (items.length <= 1) return [items];
  const out: T[][] = [];
  for (let i = 0; i < items.length; i++) {
    const rest = [...items.slice(0, i), ...items.slice(i + 1)];
    for (const tail of permutations(rest)) out.push([items[i] as T, ...tail]);
  }
  return out;
}

describe("sequencer", () => {
  it("applies the first ticket", () => {
    const seq = new Sequencer();
    const t = seq.issue();
    expect(seq.tryApply(t)).toBe(true);
  });

  it("rejects a ticket older than one already shown", () => {
    const seq = new Sequencer();
    const a = seq.issue();
    const b = seq.issue();
    expect(seq.tryApply(b)).toBe(true);
    expect(seq.tryApply(a)).toBe(false);
  });

  it("applies each ticket at most once", () => {
    const seq = new Sequencer();
    const t = seq.issue();
    expect(seq.tryApply(t)).toBe(true);
    expect(seq.tryApply(t)).toBe(false);
  });

  it("shows the highest ticket under every interleaving of completions", () => {
    // five outstanding requests, all 120 completion orders: whatever the
    // order, the last applied ticket is the newest request, and applied
    // tickets only ever move forward
    for (const order of permutations([1, 2, 3, 4, 5])) {
      const seq = new Sequencer();
      for (let i = 0; i < 5; i++) seq.issue();
      let shown = 0;
      for (const id of order) {
        if (seq.tryApply(id)) {
          expect(id).toBeGreaterThan(shown);
          shown = id;
        }
      }
      expect(shown).toBe(5);
    }
  });

  it("shows the highest completed ticket when the newest never lands", () => {
    const seq = new Sequencer();
    for (let i = 0; i < 3; i++) seq.issue();
    expect(seq.tryApply(2)).toBe(true);
    expect(seq.tryApply(1)).toBe(false);
    // ticket 3 was lost to the network; 2 stays on screen
  });

  it("invalidation strands every outstanding ticket", () => {
    const seq = new Sequencer();
    const a = seq.issue();
    const b = seq.issue();
    seq.invalidateAll();
    expect(seq.tryApply(a)).toBe(false);
    expect(seq.tryApply(b)).toBe(false);
    const c = seq.issue();
    expect(seq.tryApply(c)).toBe(true);
  });
});

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import type { Api, Domain, Latents, UploadInfo } from "../src/api";
import { ApiError } from "../src/api";
import { Controller, clampAlpha, type View } from "../src/controller";

interface Deferred<T> {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (reason: unknown) => void;
}

function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (reason: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

interface EnhanceCall {
  token: string;
  alpha: number;
  signal?: AbortSignal;
  reply: Deferred<Blob>;
}

/** Fake service: every enhance call parks a deferred so tests control the
 * completion order. Aborts are recorded but not honoured unless asked,
 * which keeps the discard rule observable separately from cancellation. */
class FakeApi implements Api {
  enhances: EnhanceCall[] = [];
  uploadReply: () => Promise<UploadInfo> = () => {
    throw new Error("unexpected upload");
  };
  latentsReply: () => Promise<Latents> = () =>
    Promise.resolve({ domain: "SYN", style: ZEROS, clean_style: ZEROS });

  upload(_file: Blob, _domain: Domain): Promise<UploadInfo> {
    return this.uploadReply();
  }

  enhance(token: string, alpha: number, signal?: AbortSignal): Promise<Blob> {
    const call: EnhanceCall = { token, alpha, signal, reply: deferred<Blob>() };
    this.enhances.push(call);
    return call.reply.promise;
  }

  latents(_token: string): Promise<Latents> {
    return this.latentsReply();
  }
}

const ZEROS = [0, 0, 0, 0, 0, 0, 0, 0];

function uploadInfo(token: string): UploadInfo {
  return { token, width: 64, height: 64, domain: "SYN" };
}

class RecordingView implements View {
  original: Blob | null = null;
  enhanced: Blob | null = null;
  latents: Latents | null = null;
  stale = false;
  busy = false;
  error: string | null = null;
  enhancedCleared = 0;

  showOriginal(image: Blob): void {
    this.original = image;
  }
  showEnhanced(image: Blob): void {
    this.enhanced = image;
  }
  clearEnhanced(): void {
    this.enhanced = null;
    this.enhancedCleared += 1;
  }
  showLatents(latents: Latents): void {
    this.latents = latents;
  }
  clearLatents(): void {
    this.latents = null;
  }
  setAlpha(_alpha: number): void {}
  setBusy(busy: boolean): void {
    this.busy = busy;
  }
  setStale(stale: boolean): void {
    this.stale = stale;
  }
  showError(message: string): void {
    this.error = message;
  }
  clearError(): void {
    this.error = null;
  }
}

function blob(tag: string): Blob {
  return new Blob([tag], { type: "image/png" });
}

async function settle(): Promise<void> {
  // let promise chains run without advancing the fake clock
  for (let i = 0; i < 8; i++) await Promise.resolve();
}

let api: FakeApi;
let view: RecordingView;
let ctl: Controller;

beforeEach(() => {
  vi.useFakeTimers();
  api = new FakeApi();
  view = new RecordingView();
  ctl = new Controller(api, view);
});

afterEach(() => {
  vi.useRealTimers();
});

async function uploadFixture(token = "t1"): Promise<Blob> {
  api.uploadReply = () => Promise.resolve(uploadInfo(token));
  const file = blob(`file-${token}`);
  const done = ctl.onUpload(file, "SYN");
  await settle();
  const first = api.enhances[api.enhances.length - 1];
  first?.reply.resolve(blob(`enh-${token}`));
  await done;
  return file;
}

describe("upload flow", () => {
  it("populates both panes and the latent rows", async () => {
    const style = [0.5, -0.2, 0, 0, 0, 0, 0, 0.1];
    api.latentsReply = () =>
      Promise.resolve({ domain: "SYN", style, clean_style: ZEROS });
    const file = await uploadFixture();
    expect(view.original).toBe(file);
    expect(view.enhanced).not.toBeNull();
    expect(view.latents?.style).toEqual(style);
    expect(view.busy).toBe(false);
    expect(ctl.state.token).toBe("t1");
    // first render happens at the slider's current value, no debounce wait
    expect(api.enhances[0]?.alpha).toBe(1);
  });

  it("surfaces an oversized-image rejection and keeps state unchanged", async () => {
    api.uploadReply = () => Promise.reject(new ApiError(413, "image side 2048 exceeds limit 1024"));
    await ctl.onUpload(blob("big"), "SYN");
    expect(view.error).toContain("image side 2048 exceeds limit 1024");
    expect(ctl.state.token).toBeNull();
    expect(view.original).toBeNull();
    expect(api.enhances).toHaveLength(0);
  });

  it("surfaces an undecodable-image rejection", async () => {
    api.uploadReply = () => Promise.reject(new ApiError(415, "empty or unreadable request body"));
    await ctl.onUpload(blob("junk"), "SYN");
    expect(view.error).toContain("unreadable");
    expect(ctl.state.token).toBeNull();
  });

  it("leaves state untouched when the service is down", async () => {
    api.uploadReply = () => Promise.reject(new TypeError("fetch failed"));
    await ctl.onUpload(blob("any"), "SYN");
    expect(view.error).toContain("fetch failed");
    expect(ctl.state.token).toBeNull();
    expect(view.original).toBeNull();
    expect(view.busy).toBe(false);
  });

  it("re-upload replaces the token and clears the enhanced pane", async () => {
    await uploadFixture("t1");
    const shownBefore = view.enhanced;
    expect(shownBefore).not.toBeNull();

    // a second picked file: pane must clear rather than show t1's render
    api.uploadReply = () => Promise.resolve(uploadInfo("t2"));
    const done = ctl.onUpload(blob("file-t2"), "SYN");
    await settle();
    expect(ctl.state.token).toBe("t2");
    expect(view.enhancedCleared).toBeGreaterThan(0);
    const second = api.enhances[api.enhances.length - 1];
    expect(second?.token).toBe("t2");
    second?.reply.resolve(blob("enh-t2"));
    await done;
    expect(view.enhanced).not.toBe(shownBefore);
  });

  it("drops a late response that belongs to the previous token", async () => {
    await uploadFixture("t1");
    // kick off an enhance for t1 and leave it hanging
    ctl.onAlphaChange(0.5);
    await vi.advanceTimersByTimeAsync(150);
    const pendingOld = api.enhances[api.enhances.length - 1];
    expect(pendingOld?.token).toBe("t1");

    api.uploadReply = () => Promise.resolve(uploadInfo("t2"));
    const done = ctl.onUpload(blob("file-t2"), "SYN");
    await settle();
    const fresh = api.enhances[api.enhances.length - 1];
    fresh?.reply.resolve(blob("enh-t2"));
    await done;
    const shown = view.enhanced;

    // the t1 response finally lands; the pane must not move
    pendingOld?.reply.resolve(blob("stale-t1"));
    await settle();
    expect(view.enhanced).toBe(shown);
    // and its request was cancelled outright when t2 took over
    expect(pendingOld?.signal?.aborted).toBe(true);
  });
});

describe("alpha changes", () => {
  it("ignores slider movement before any upload", async () => {
    ctl.onAlphaChange(0.3);
    await vi.advanceTimersByTimeAsync(500);
    expect(api.enhances).toHaveLength(0);
  });

  it("debounces a fast drag into a single request at the final value", async () => {
    await uploadFixture();
    const before = api.enhances.length;
    // 0 -> 1 swept in 5 ms steps, far inside the 100 ms quiet window
    for (let i = 0; i <= 20; i++) {
      ctl.onAlphaChange(i * 0.05);
      await vi.advanceTimersByTimeAsync(5);
    }
    await vi.advanceTimersByTimeAsync(200);
    expect(api.enhances.length).toBe(before + 1);
    expect(api.enhances[api.enhances.length - 1]?.alpha).toBe(1);
  });

  it("a slow drag fires a monotone request sequence ending at the slider", async () => {
    await uploadFixture();
    const before = api.enhances.length;
    for (const alpha of [0.25, 0.5, 0.75, 1.0]) {
      ctl.onAlphaChange(alpha);
      await vi.advanceTimersByTimeAsync(150);
    }
    const fired = api.enhances.slice(before);
    expect(fired.map((c) => c.alpha)).toEqual([0.25, 0.5, 0.75, 1.0]);
    fired[3]?.reply.resolve(blob("enh-final"));
    await settle();
    expect(view.enhanced).not.toBeNull();
  });

  it("discards an out-of-order response for an older alpha", async () => {
    await uploadFixture();
    ctl.onAlphaChange(0.2);
    await vi.advanceTimersByTimeAsync(150);
    const older = api.enhances[api.enhances.length - 1];
    ctl.onAlphaChange(0.9);
    await vi.advanceTimersByTimeAsync(150);
    const newer = api.enhances[api.enhances.length - 1];
    expect(older?.alpha).toBe(0.2);
    expect(newer?.alpha).toBe(0.9);

    const winning = blob("enh-0.9");
    newer?.reply.resolve(winning);
    await settle();
    expect(view.enhanced).toBe(winning);

    older?.reply.resolve(blob("enh-0.2"));
    await settle();
    expect(view.enhanced).toBe(winning);
  });

  it("superseding a request aborts it", async () => {
    await uploadFixture();
    ctl.onAlphaChange(0.2);
    await vi.advanceTimersByTimeAsync(150);
    const older = api.enhances[api.enhances.length - 1];
    expect(older?.signal?.aborted).toBe(false);
    ctl.onAlphaChange(0.9);
    await vi.advanceTimersByTimeAsync(150);
    expect(older?.signal?.aborted).toBe(true);
  });

  it("a network failure keeps the last good image and flags it stale", async () => {
    await uploadFixture();
    const good = view.enhanced;
    expect(good).not.toBeNull();

    ctl.onAlphaChange(0.6);
    await vi.advanceTimersByTimeAsync(150);
    api.enhances[api.enhances.length - 1]?.reply.reject(new TypeError("fetch failed"));
    await settle();
    expect(view.enhanced).toBe(good);
    expect(view.stale).toBe(true);
    expect(view.error).toContain("fetch failed");

    // the next successful render clears the badge
    ctl.onAlphaChange(0.7);
    await vi.advanceTimersByTimeAsync(150);
    const retry = api.enhances[api.enhances.length - 1];
    const fresh = blob("enh-0.7");
    retry?.reply.resolve(fresh);
    await settle();
    expect(view.enhanced).toBe(fresh);
    expect(view.stale).toBe(false);
    expect(view.error).toBeNull();
  });

  it("shows exactly the blob the service returned", async () => {
    // thin-client check: no local recoding of the rendered image
    await uploadFixture();
    ctl.onAlphaChange(0.4);
    await vi.advanceTimersByTimeAsync(150);
    const payload = blob("bytes-from-service");
    api.enhances[api.enhances.length - 1]?.reply.resolve(payload);
    await settle();
    expect(view.enhanced).toBe(payload);
  });
});

describe("alpha clamping", () => {
  it("bounds and snaps slider values", () => {
    expect(clampAlpha(2)).toBe(1.5);
    expect(clampAlpha(-1)).toBe(-0.5);
    expect(clampAlpha(0.3)).toBe(0.3);
    expect(clampAlpha(0.12)).toBe(0.1);
    expect(clampAlpha(Number.NaN)).toBe(1);
  });

  it("keeps state inside the slider range", async () => {
    await uploadFixture();
    ctl.onAlphaChange(99);
    expect(ctl.state.alpha).toBe(1.5);
    ctl.onAlphaChange(-99);
    expect(ctl.state.alpha).toBe(-0.5);
  });
});

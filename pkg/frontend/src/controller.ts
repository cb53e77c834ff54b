import type { Api, Domain, Latents } from "./api";
import { debounce, type Debounced } from "./debounce";
import { Sequencer } from "./sequencer";

export const ALPHA_MIN = -0.5;
export const ALPHA_MAX = 1.5;
export const ALPHA_STEP = 0.05;

/** Snap to the slider's 0.05 grid inside [-0.5, 1.5], with the float dust
 * rounded away so the readout prints what the slider shows. */
export function clampAlpha(value: number): number {
  if (!Number.isFinite(value)) return 1;
  const snapped = Math.round(value / ALPHA_STEP) * ALPHA_STEP;
  const bounded = Math.min(ALPHA_MAX, Math.max(ALPHA_MIN, snapped));
  return Math.round(bounded * 100) / 100;
}

/** Everything the page renders. The DOM layer implements this; tests
 * record calls instead, since no pixel shown here is computed locally. */
export interface View {
  showOriginal(image: Blob): void;
  showEnhanced(image: Blob): void;
  clearEnhanced(): void;
  showLatents(latents: Latents): void;
  clearLatents(): void;
  setAlpha(alpha: number): void;
  setBusy(busy: boolean): void;
  setStale(stale: boolean): void;
  showError(message: string): void;
  clearError(): void;
}

export interface ViewState {
  token: string | null;
  domain: Domain;
  alpha: number;
  inFlight: boolean;
}

function messageOf(exc: unknown): string {
  if (exc instanceof Error) return exc.message;
  return String(exc);
}

function isAbort(exc: unknown): boolean {
  return exc instanceof Error && exc.name === "AbortError";
}

export class Controller {
  readonly state: ViewState = { token: null, domain: "SYN", alpha: 1, inFlight: false };

  private readonly seq = new Sequencer();
  private readonly debouncedEnhance: Debounced<[]>;
  private abort: AbortController | null = null;

  constructor(
    private readonly api: Api,
    private readonly view: View,
    debounceMs = 100,
  ) {
    this.debouncedEnhance = debounce(() => void this.requestEnhance(), debounceMs);
  }

  /** Upload a picked file, then populate both panes and the latent rows.
   * On failure the previous state is left untouched. */
  async onUpload(file: Blob, domain: Domain): Promise<void> {
    this.view.clearError();
    this.view.setBusy(true);
    let token: string;
    try {
      token = (await this.api.upload(file, domain)).token;
    } catch (exc) {
      this.view.setBusy(false);
      this.view.showError(`upload failed: ${messageOf(exc)}`);
      return;
    }
    // responses to anything issued for the previous token are stale now
    this.seq.invalidateAll();
    this.abort?.abort();
    this.debouncedEnhance.cancel();
    this.state.token = token;
    this.state.domain = domain;
    this.view.showOriginal(file);
    this.view.clearEnhanced();
    this.view.clearLatents();
    this.view.setStale(false);
    try {
      this.view.showLatents(await this.api.latents(token));
    } catch (exc) {
      this.view.showError(`latents failed: ${messageOf(exc)}`);
    }
    await this.requestEnhance();
    this.view.setBusy(false);
  }

  /** Slider moved: mirror the value, then request a render after the
   * 100 ms quiet period. No-op until something has been uploaded. */
  onAlphaChange(value: number): void {
    this.state.alpha = clampAlpha(value);
    this.view.setAlpha(this.state.alpha);
    if (this.state.token !== null) this.debouncedEnhance();
  }

  /** Issue one enhance request. The previous in-flight request is
   * cancelled, and a response that lost the race is dropped unseen. */
  private async requestEnhance(): Promise<void> {
    const token = this.state.token;
    if (token === null) return;
    const ticket = this.seq.issue();
    this.abort?.abort();
    const ctl = new AbortController();
    this.abort = ctl;
    this.state.inFlight = true;
    try {
      const image = await this.api.enhance(token, this.state.alpha, ctl.signal);
      if (token === this.state.token && this.seq.tryApply(ticket)) {
        this.view.showEnhanced(image);
        this.view.setStale(false);
        this.view.clearError();
      }
    } catch (exc) {
      if (!isAbort(exc) && this.seq.tryApply(ticket)) {
        // keep the last good image on screen, but badge it as out of date
        this.view.setStale(true);
        this.view.showError(`enhance failed: ${messageOf(exc)}`);
      }
    } finally {
      if (this.abort === ctl) {
        this.abort = null;
        this.state.inFlight = false;
      }
    }
  }
}

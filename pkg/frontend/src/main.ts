import { Client, type Domain, type Latents } from "./api";
import { signedBars, sharedScale } from "./bars";
import { ALPHA_MAX, ALPHA_MIN, ALPHA_STEP, Controller, type View } from "./controller";
import "./style.css";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

/** DOM side of the View contract: swaps object URLs in and out of the two
 * panes and rebuilds the latent rows. All pixels come from the service. */
class DomView implements View {
  private originalUrl: string | null = null;
  private enhancedUrl: string | null = null;

  private readonly original = el<HTMLImageElement>("original");
  private readonly enhanced = el<HTMLImageElement>("enhanced");
  private readonly latentPanel = el<HTMLDivElement>("latents");
  private readonly readout = el<HTMLSpanElement>("alpha-readout");
  private readonly banner = el<HTMLDivElement>("error-banner");
  private readonly staleBadge = el<HTMLSpanElement>("stale-badge");
  private readonly busyBadge = el<HTMLSpanElement>("busy-badge");

  showOriginal(image: Blob): void {
    if (this.originalUrl !== null) URL.revokeObjectURL(this.originalUrl);
    this.originalUrl = URL.createObjectURL(image);
    this.original.src = this.originalUrl;
    this.original.classList.remove("empty");
  }

  showEnhanced(image: Blob): void {
    if (this.enhancedUrl !== null) URL.revokeObjectURL(this.enhancedUrl);
    this.enhancedUrl = URL.createObjectURL(image);
    this.enhanced.src = this.enhancedUrl;
    this.enhanced.classList.remove("empty");
  }

  clearEnhanced(): void {
    if (this.enhancedUrl !== null) URL.revokeObjectURL(this.enhancedUrl);
    this.enhancedUrl = null;
    this.enhanced.removeAttribute("src");
    this.enhanced.classList.add("empty");
  }

  showLatents(latents: Latents): void {
    const scale = sharedScale([latents.style, latents.clean_style]);
    this.latentPanel.replaceChildren(
      this.barRow(`style (${latents.domain})`, latents.style, scale),
      this.barRow("clean style", latents.clean_style, scale),
    );
  }

  clearLatents(): void {
    this.latentPanel.replaceChildren();
  }

  setAlpha(alpha: number): void {
    this.readout.textContent = alpha.toFixed(2);
  }

  setBusy(busy: boolean): void {
    this.busyBadge.hidden = !busy;
  }

  setStale(stale: boolean): void {
    this.staleBadge.hidden = !stale;
  }

  showError(message: string): void {
    this.banner.textContent = message;
    this.banner.hidden = false;
  }

  clearError(): void {
    this.banner.hidden = true;
  }

  private barRow(label: string, values: number[], scale: number): HTMLDivElement {
    const row = document.createElement("div");
    row.className = "bar-row";
    const caption = document.createElement("span");
    caption.className = "bar-label";
    caption.textContent = label;
    row.appendChild(caption);
    const bars = signedBars(values, scale);
    for (let i = 0; i < bars.length; i++) {
      const bar = bars[i];
      if (bar === undefined) continue;
      const cell = document.createElement("div");
      cell.className = "bar-cell";
      cell.title = `z${i} = ${values[i]}`;
      const fill = document.createElement("div");
      fill.className = bar.negative ? "bar neg" : "bar pos";
      // half the cell is above the baseline, half below
      fill.style.height = `${(bar.frac * 50).toFixed(1)}%`;
      cell.appendChild(fill);
      row.appendChild(cell);
    }
    return row;
  }
}

function wire(): void {
  const view = new DomView();
  const controller = new Controller(new Client(), view);

  const file = el<HTMLInputElement>("file");
  const domain = el<HTMLSelectElement>("domain");
  const slider = el<HTMLInputElement>("alpha");

  slider.min = String(ALPHA_MIN);
  slider.max = String(ALPHA_MAX);
  slider.step = String(ALPHA_STEP);
  slider.value = String(controller.state.alpha);
  view.setAlpha(controller.state.alpha);

  file.addEventListener("change", () => {
    const picked = file.files?.[0];
    if (picked !== undefined) {
      void controller.onUpload(picked, domain.value as Domain);
    }
  });
  slider.addEventListener("input", () => {
    controller.onAlphaChange(Number(slider.value));
  });

  void new Client()
    .health()
    .then((h) => {
      el<HTMLSpanElement>("health").textContent = `checkpoint ${h.checkpoint_id}`;
    })
    .catch(() => {
      el<HTMLSpanElement>("health").textContent = "service unreachable";
    });
}

wire();

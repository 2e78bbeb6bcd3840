/** The edit console: sliders in, preview out, everything through the API. */

import { ApiClient, ApiError, ModelInfo, TraverseAnchor } from "./api.js";
import { LatestWins, debounce } from "./debounce.js";
import { buildSliders } from "./sliders.js";
import {
  ConsoleState,
  clamp01,
  editableFactors,
  initialState,
  isFineModel,
  pushHistory,
} from "./state.js";
import { renderStrip } from "./strip.js";

export type ConsoleOptions = {
  debounceMs?: number;
  toastMs?: number;
};

export class EditConsole {
  readonly state: ConsoleState = initialState();
  private readonly requests = new LatestWins<{ image: string; code: number[] }>();
  private readonly scheduleFlush: () => void;

  private banner!: HTMLElement;
  private slidersBox!: HTMLElement;
  private preview!: HTMLImageElement;
  private stripsBox!: HTMLElement;
  private toastBox!: HTMLElement;
  private uploadPanel!: HTMLElement;
  private generatePanel!: HTMLElement;
  private historyBox!: HTMLElement;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    options: ConsoleOptions = {},
  ) {
    this.buildSkeleton();
    this.scheduleFlush = debounce(() => this.flush(), options.debounceMs ?? 150);
  }

  private buildSkeleton(): void {
    this.root.innerHTML = `
      <div class="fg-banner" hidden></div>
      <div class="fg-main">
        <div class="fg-controls">
          <div class="fg-upload" hidden>
            <input type="file" accept="image/png" class="fg-upload-input">
          </div>
          <div class="fg-generate-controls" hidden>
            <label>z seed <input type="number" class="fg-zseed" value="0"></label>
          </div>
          <div class="fg-sliders"></div>
          <div class="fg-strip-controls">
            <label>factor <input type="number" class="fg-strip-factor" value="0" min="0"></label>
            <label>steps <input type="number" class="fg-strip-steps" value="8" min="2"></label>
            <button class="fg-strip-pin">pin strip</button>
          </div>
        </div>
        <div class="fg-preview"><img class="fg-preview-img" alt="preview"></div>
        <ul class="fg-history"></ul>
      </div>
      <div class="fg-strips"></div>
      <div class="fg-toast" hidden></div>
    `;
    this.banner = this.q(".fg-banner");
    this.slidersBox = this.q(".fg-sliders");
    this.preview = this.q(".fg-preview-img");
    this.stripsBox = this.q(".fg-strips");
    this.toastBox = this.q(".fg-toast");
    this.uploadPanel = this.q(".fg-upload");
    this.generatePanel = this.q(".fg-generate-controls");
    this.historyBox = this.q(".fg-history");
    this.q<HTMLButtonElement>(".fg-strip-pin").addEventListener("click", () => {
      const factor = Number(this.q<HTMLInputElement>(".fg-strip-factor").value);
      const steps = Number(this.q<HTMLInputElement>(".fg-strip-steps").value);
      void this.pinStrip(factor, steps);
    });
    this.q<HTMLInputElement>(".fg-zseed").addEventListener("change", (ev) => {
      const seed = Number((ev.target as HTMLInputElement).value);
      this.state.anchor = { kind: "code", zSeed: seed };
      this.scheduleFlush();
    });
  }

  private q<T extends HTMLElement = HTMLElement>(sel: string): T {
    const el = this.root.querySelector<T>(sel);
    if (!el) throw new Error(`missing element ${sel}`);
    return el;
  }

  get info(): ModelInfo | null {
    return this.state.info;
  }

  /** Pulls /model/info and rebuilds every capability-gated control. */
  async syncModelInfo(): Promise<void> {
    try {
      const info = await this.api.modelInfo();
      this.state.info = info;
      this.banner.hidden = true;
      const factors = editableFactors(info);
      this.state.sliders = factors.map(() => 0.5);
      buildSliders(
        this.slidersBox,
        factors.map((f) => f.name),
        this.state.sliders,
        (pos, value) => this.setSlider(pos, value),
      );
      const fine = isFineModel(info);
      this.uploadPanel.hidden = !fine;
      this.generatePanel.hidden = fine;
      if (fine) {
        this.state.anchor = { kind: "image", image: "" };
      }
    } catch (err) {
      this.banner.hidden = false;
      this.banner.textContent =
        `service unreachable: ${err instanceof Error ? err.message : String(err)}`;
      this.slidersBox.replaceChildren();
      this.state.info = null;
    }
  }

  /** Clamps, stores, and schedules one debounced request with the full code. */
  setSlider(position: number, value: number): void {
    if (!this.state.info) return;
    this.state.sliders[position] = clamp01(value);
    this.scheduleFlush();
  }

  setAnchorImage(imageB64: string): void {
    this.state.anchor = { kind: "image", image: imageB64 };
    this.scheduleFlush();
  }

  currentCode(): number[] {
    return [...this.state.sliders];
  }

  private flush(): void {
    const info = this.state.info;
    if (!info) return;
    const code = this.currentCode();
    let fired: Promise<{ image: string }>;
    if (isFineModel(info)) {
      const anchor = this.state.anchor;
      if (anchor.kind !== "image" || !anchor.image) return;
      fired = this.api.edit(anchor.image, code);
    } else {
      const zSeed = this.state.anchor.kind === "code" ? this.state.anchor.zSeed : 0;
      fired = this.api.generate(code, zSeed);
    }
    void this.requests.dispatch(
      fired.then((resp) => ({ image: resp.image, code })),
      ({ image, code: usedCode }) => {
        this.preview.src = `data:image/png;base64,${image}`;
        this.state.lastImage = image;
        pushHistory(this.state, usedCode, image);
        this.renderHistory();
      },
      (err) => this.toast(err),
    );
  }

  private renderHistory(): void {
    this.historyBox.replaceChildren();
    this.state.history.forEach((step) => {
      const item = document.createElement("li");
      item.className = "fg-history-step";
      item.textContent = step.code.map((v) => v.toFixed(2)).join(", ");
      item.addEventListener("click", () => {
        this.state.sliders = [...step.code];
        this.scheduleFlush();
      });
      this.historyBox.append(item);
    });
  }

  /** Pins a traversal strip for the current anchor; multiple strips coexist. */
  async pinStrip(factor: number, steps: number): Promise<void> {
    const info = this.state.info;
    if (!info) return;
    const anchor: TraverseAnchor =
      this.state.anchor.kind === "image"
        ? { image: this.state.anchor.image }
        : { code: this.currentCode(), z_seed: this.state.anchor.zSeed };
    try {
      const resp = await this.api.traverse(anchor, factor, steps);
      this.stripsBox.append(renderStrip(resp.images, `factor ${factor}`));
    } catch (err) {
      this.toast(err);
    }
  }

  private toast(err: unknown): void {
    this.toastBox.hidden = false;
    this.toastBox.textContent =
      err instanceof ApiError ? err.message : `request failed: ${String(err)}`;
  }
}

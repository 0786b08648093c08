import { ApiClient } from "./api.js";
import { showBanner } from "./banner.js";
import type { RunConfigBody } from "./types.js";

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, Number.isFinite(value) ? value : hi));
}

/**
 * Upload-and-configure flow: paste or pick a taxonomy file, see its stats,
 * choose model/strategy/thresholds, launch the run. Every control maps 1:1
 * to a run-config field; rho is clamped to [0, 1] client-side to mirror
 * the service's validation.
 */
export class UploadPanel {
  readonly el: HTMLElement;
  private taxonomyId: string | null = null;
  private readonly textarea: HTMLTextAreaElement;
  private readonly statsCard: HTMLElement;
  private readonly modelSelect: HTMLSelectElement;
  private readonly rhoInput: HTMLInputElement;
  private readonly launchButton: HTMLButtonElement;

  constructor(
    private readonly api: ApiClient,
    private readonly onLaunched: (runId: string) => void,
  ) {
    this.el = document.createElement("section");
    this.el.className = "upload-panel";
    this.el.innerHTML = `
      <h2>seed taxonomy</h2>
      <input type="file" class="file" accept=".json,application/json">
      <textarea class="document" rows="10"
        placeholder='{"name": "Thing", "children": [...]}'></textarea>
      <button type="button" class="upload">upload</button>
      <div class="stats-card" hidden></div>
      <fieldset class="run-config" disabled>
        <legend>run</legend>
        <label>model <select class="model"></select></label>
        <label>strategy
          <select class="strategy">
            <option value="bfs">bfs</option>
            <option value="dfs">dfs</option>
          </select>
        </label>
        <label>similarity threshold
          <input class="rho" type="number" min="0" max="1" step="0.01" value="0.9">
        </label>
        <label>extra depth
          <input class="extra-depth" type="number" min="0" step="1" value="1">
        </label>
        <label><input class="judge" type="checkbox"> judge filter</label>
        <label><input class="kg" type="checkbox"> knowledge-graph check</label>
        <button type="button" class="launch">launch enrichment</button>
      </fieldset>
    `;
    this.textarea = this.el.querySelector(".document") as HTMLTextAreaElement;
    this.statsCard = this.el.querySelector(".stats-card") as HTMLElement;
    this.modelSelect = this.el.querySelector(".model") as HTMLSelectElement;
    this.rhoInput = this.el.querySelector(".rho") as HTMLInputElement;
    this.launchButton = this.el.querySelector(".launch") as HTMLButtonElement;

    const file = this.el.querySelector(".file") as HTMLInputElement;
    file.addEventListener("change", () => {
      const picked = file.files?.[0];
      if (!picked) return;
      void picked.text().then((text) => {
        this.textarea.value = text;
      });
    });

    this.rhoInput.addEventListener("change", () => {
      this.rhoInput.value = String(clamp(Number(this.rhoInput.value), 0, 1));
    });

    (this.el.querySelector(".upload") as HTMLButtonElement).addEventListener("click", () =>
      void this.upload(),
    );
    this.launchButton.addEventListener("click", () => void this.launch());
  }

  async upload(): Promise<void> {
    try {
      const meta = await this.api.uploadTaxonomy(this.textarea.value);
      this.taxonomyId = meta.taxonomy_id;
      this.statsCard.hidden = false;
      this.statsCard.textContent =
        `${meta.name}: ${meta.stats.class_count} classes, max depth ${meta.stats.max_depth}`;
      await this.populateModels();
      (this.el.querySelector(".run-config") as HTMLFieldSetElement).disabled = false;
    } catch (err) {
      showBanner(this.el, err, () => void this.upload());
    }
  }

  private async populateModels(): Promise<void> {
    const { models } = await this.api.listModels();
    this.modelSelect.replaceChildren(
      ...models.map((id) => {
        const option = document.createElement("option");
        option.value = id;
        option.textContent = id;
        return option;
      }),
    );
  }

  async launch(): Promise<void> {
    if (!this.taxonomyId) return;
    const body: RunConfigBody = {
      taxonomy_id: this.taxonomyId,
      model_id: this.modelSelect.value,
      strategy: (this.el.querySelector(".strategy") as HTMLSelectElement).value,
      rho: clamp(Number(this.rhoInput.value), 0, 1),
      max_extra_depth: Number((this.el.querySelector(".extra-depth") as HTMLInputElement).value),
      judge_enabled: (this.el.querySelector(".judge") as HTMLInputElement).checked,
      kg_check_enabled: (this.el.querySelector(".kg") as HTMLInputElement).checked,
    };
    try {
      const { run_id } = await this.api.startRun(body);
      this.onLaunched(run_id);
    } catch (err) {
      showBanner(this.el, err, () => void this.launch());
    }
  }
}

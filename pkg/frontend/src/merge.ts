import { ApiClient } from "./api.js";
import { showBanner } from "./banner.js";
import { pathKey, renderTree } from "./tree.js";
import type { MergeColor, StoredTaxonomyMeta } from "./types.js";

const COLORS: MergeColor[] = ["common", "only-left", "only-right"];

/**
 * Side-by-side merge of two stored taxonomies. The merged tree is colored
 * from the service's report (common=green, only-left=blue, only-right=red)
 * with per-color visibility toggles; a root mismatch renders inline.
 */
export class MergeExplorer {
  readonly el: HTMLElement;
  private readonly leftSelect: HTMLSelectElement;
  private readonly rightSelect: HTMLSelectElement;
  private readonly host: HTMLElement;

  constructor(private readonly api: ApiClient) {
    this.el = document.createElement("section");
    this.el.className = "merge-explorer";
    this.el.innerHTML = `
      <header>
        <h2>merge explorer</h2>
        <label>left <select class="left"></select></label>
        <label>right <select class="right"></select></label>
        <button type="button" class="compare">compare</button>
      </header>
      <div class="merge-host"></div>
    `;
    this.leftSelect = this.el.querySelector(".left") as HTMLSelectElement;
    this.rightSelect = this.el.querySelector(".right") as HTMLSelectElement;
    this.host = this.el.querySelector(".merge-host") as HTMLElement;
    (this.el.querySelector(".compare") as HTMLButtonElement).addEventListener("click", () =>
      void this.compare(this.leftSelect.value, this.rightSelect.value),
    );
  }

  async loadChoices(): Promise<void> {
    const { taxonomies } = await this.api.listTaxonomies();
    const fill = (select: HTMLSelectElement) => {
      select.replaceChildren(
        ...taxonomies.map((t: StoredTaxonomyMeta) => {
          const option = document.createElement("option");
          option.value = t.taxonomy_id;
          option.textContent = `${t.name} (${t.stats.class_count} classes)`;
          return option;
        }),
      );
    };
    fill(this.leftSelect);
    fill(this.rightSelect);
  }

  async compare(leftId: string, rightId: string): Promise<void> {
    this.host.replaceChildren();
    let result;
    try {
      result = await this.api.merge(leftId, rightId);
    } catch (err) {
      const inline = document.createElement("div");
      inline.className = "inline-error";
      inline.textContent = err instanceof Error ? err.message : String(err);
      this.host.appendChild(inline);
      showBanner(this.el, err);
      return;
    }

    const colorByPath = new Map<string, MergeColor>(
      result.report.entries.map((entry) => [pathKey(entry.path), entry.color]),
    );
    const wrap = document.createElement("div");
    wrap.className = "merge-result";

    const legend = document.createElement("div");
    legend.className = "legend";
    for (const color of COLORS) {
      const item = document.createElement("label");
      item.className = `legend-item merge-${color}`;
      const toggle = document.createElement("input");
      toggle.type = "checkbox";
      toggle.checked = true;
      toggle.addEventListener("change", () =>
        wrap.classList.toggle(`hide-${color}`, !toggle.checked),
      );
      item.appendChild(toggle);
      item.appendChild(
        document.createTextNode(` ${color}: ${result.report.counts[color] ?? 0}`),
      );
      legend.appendChild(item);
    }
    wrap.appendChild(legend);

    wrap.appendChild(
      renderTree(result.taxonomy, {
        colorFor: (path) => colorByPath.get(pathKey(path)) ?? null,
      }),
    );
    this.host.appendChild(wrap);
  }
}

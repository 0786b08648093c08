import { ApiClient } from "./api.js";
import { MergeExplorer } from "./merge.js";
import { RunView } from "./runview.js";
import { UploadPanel } from "./upload.js";

function baseUrl(): string {
  const meta = document.querySelector('meta[name="taxoria-base-url"]');
  const fromMeta = meta?.getAttribute("content") ?? "";
  const fromGlobal = (window as { TAXORIA_BASE_URL?: string }).TAXORIA_BASE_URL ?? "";
  return fromGlobal || fromMeta;
}

function boot(): void {
  const api = new ApiClient(baseUrl());
  const app = document.getElementById("app");
  if (!app) return;

  let activeRun: RunView | null = null;

  const showRun = (runId: string) => {
    activeRun?.stop();
    activeRun = new RunView(api, runId);
    runHost.replaceChildren(activeRun.el);
    activeRun.start();
    location.hash = `#run/${runId}`;
  };

  const upload = new UploadPanel(api, showRun);
  const runHost = document.createElement("div");
  runHost.id = "run-host";
  const merge = new MergeExplorer(api);

  app.replaceChildren(upload.el, runHost, merge.el);
  void merge.loadChoices().catch(() => {
    // service not reachable yet; choices refill after the first upload
  });

  const fromHash = location.hash.match(/^#run\/(.+)$/);
  if (fromHash) showRun(fromHash[1]);
}

document.addEventListener("DOMContentLoaded", boot);

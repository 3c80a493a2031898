// Browser bootstrap: hash routing between the three views, event delegation,
// and the a/d keyboard shortcuts for the audit queue.

import { HttpApiClient } from "./api.js";
import { AdjudicationFlow, WhatIfPanel } from "./controllers.js";
import { renderDashboard } from "./views/dashboard.js";
import { renderQueue } from "./views/queue.js";
import { renderWhatIf } from "./views/whatif.js";

type View = "queue" | "dashboard" | "whatif";

export class App {
  readonly flow: AdjudicationFlow;
  readonly panel: WhatIfPanel;
  view: View = "queue";

  constructor(
    api = new HttpApiClient(),
    private readonly root: HTMLElement = document.getElementById("app")!,
  ) {
    this.flow = new AdjudicationFlow(api);
    this.panel = new WhatIfPanel(api);
  }

  async start(): Promise<void> {
    window.addEventListener("hashchange", () => this.route());
    document.addEventListener("click", (ev) => void this.onClick(ev));
    document.addEventListener("change", (ev) => this.onChange(ev));
    document.addEventListener("keydown", (ev) => void this.onKey(ev));
    await this.flow.loadQueue();
    await this.flow.refreshStats();
    this.route();
  }

  private route(): void {
    const hash = window.location.hash.replace("#", "");
    this.view = hash === "dashboard" || hash === "whatif" ? hash : "queue";
    this.render();
  }

  render(): void {
    for (const link of document.querySelectorAll("nav a")) {
      link.classList.toggle("active", link.getAttribute("href") === `#${this.view}`);
    }
    if (this.view === "queue") {
      this.root.innerHTML = renderQueue(this.flow);
    } else if (this.view === "dashboard") {
      this.root.innerHTML = renderDashboard(this.flow);
    } else {
      this.root.innerHTML = renderWhatIf(this.panel);
    }
  }

  private noteFor(sampleId: string): string {
    const input = this.root.querySelector<HTMLInputElement>(
      `input[data-note="${CSS.escape(sampleId)}"]`,
    );
    return input?.value ?? "";
  }

  private async onClick(ev: Event): Promise<void> {
    const target = (ev.target as HTMLElement).closest("[data-action]");
    if (!(target instanceof HTMLElement)) return;
    const action = target.dataset.action;
    if (action === "agree" || action === "disagree") {
      const sampleId = target.dataset.sample!;
      const item = this.flow.items.find((i) => i.sample_id === sampleId);
      const verdict =
        action === "agree" ? (item?.machine_verdict ?? true) : !(item?.machine_verdict ?? false);
      await this.flow.submit(sampleId, verdict, this.noteFor(sampleId));
      this.render();
    } else if (action === "retry-queue") {
      await this.flow.loadQueue();
      this.render();
    } else if (action === "run-whatif") {
      await this.panel.run();
      this.render();
    }
  }

  private onChange(ev: Event): void {
    const target = ev.target as HTMLElement;
    const key = target.dataset.whatif;
    if (!key) return;
    const value = (target as HTMLInputElement | HTMLSelectElement).value;
    if (key === "case") {
      this.panel.setCase(value);
    } else if (key.startsWith("formulary:")) {
      const drug = key.slice("formulary:".length);
      this.panel.setFormulary(drug, value === "" ? null : (value as never));
    } else if (key.startsWith("context:")) {
      const field = key.slice("context:".length);
      this.panel.setContext(field, value === "" ? null : value);
    }
  }

  private async onKey(ev: KeyboardEvent): Promise<void> {
    if (this.view !== "queue" || ev.target instanceof HTMLInputElement) return;
    if (ev.key !== "a" && ev.key !== "d") return;
    const first = this.flow.items.find((i) => !this.flow.alreadyAdjudicated(i.sample_id));
    if (!first) return;
    const verdict =
      ev.key === "a" ? (first.machine_verdict ?? true) : !(first.machine_verdict ?? false);
    await this.flow.submit(first.sample_id, verdict);
    this.render();
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void new App().start();
}

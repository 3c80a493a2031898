// Agreement dashboard: machine-vs-human statistics straight from the API.

import type { AdjudicationFlow } from "../controllers.js";
import { escapeHtml, num } from "./html.js";

export function renderDashboard(flow: AdjudicationFlow): string {
  const stats = flow.stats;
  const submission = flow.lastSubmission
    ? flow.lastSubmission.misgradeEntryId
      ? `<p class="submission">Disagreement filed: misgrade ` +
        `<a class="misgrade-link" href="#misgrade/${escapeHtml(flow.lastSubmission.misgradeEntryId)}">` +
        `${escapeHtml(flow.lastSubmission.misgradeEntryId)}</a></p>`
      : `<p class="submission">Verdict recorded (agreement, no misgrade entry).</p>`
    : "";
  if (!stats || stats.n === 0) {
    return `${submission}<div class="empty-state">No adjudications yet.</div>`;
  }
  const table = stats.table
    ? `<table class="contingency">
        <tr><th></th><th>human met</th><th>human unmet</th></tr>
        <tr><th>machine met</th><td>${stats.table[0][0]}</td><td>${stats.table[0][1]}</td></tr>
        <tr><th>machine unmet</th><td>${stats.table[1][0]}</td><td>${stats.table[1][1]}</td></tr>
      </table>`
    : "";
  return `${submission}
  <dl class="stats">
    <dt>adjudications</dt><dd class="stat-n">${stats.n}</dd>
    <dt>raw agreement</dt><dd class="stat-raw">${num(stats.raw_agreement)}</dd>
    <dt>Cohen's kappa</dt><dd class="stat-kappa">${num(stats.kappa)}</dd>
  </dl>
  ${table}`;
}

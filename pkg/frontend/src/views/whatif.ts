// What-if panel: overlay context toggles on a case, show before/after scores
// and per-clause point deltas as the engine reports them.

import type { WhatIfDelta } from "../api.js";
import type { WhatIfPanel } from "../controllers.js";
import { escapeHtml, normalizedLabel, signed } from "./html.js";

function deltaRow(delta: WhatIfDelta): string {
  const excluded = !delta.applicable_after;
  const clause = excluded
    ? `<s>${escapeHtml(delta.clause_id)}</s> ` +
      `<span class="badge badge-excluded">EXCLUDED: ${escapeHtml(delta.exclusion_reason_after ?? "")}</span>`
    : `<a class="trace-link" href="/api/v1/clauses/${encodeURIComponent(delta.clause_id)}/trace">` +
      `${escapeHtml(delta.clause_id)}</a>`;
  return `<tr class="delta-row${excluded ? " delta-excluded" : ""}">
    <td>${clause}</td>
    <td class="points-before">${delta.points_before}</td>
    <td class="points-after">${delta.points_after}</td>
    <td class="delta">${signed(delta.delta)}</td>
  </tr>`;
}

export function renderWhatIf(panel: WhatIfPanel): string {
  const errorBanner = panel.error
    ? `<div class="banner banner-error">${escapeHtml(panel.error)}</div>`
    : "";
  const toggles = `
  <div class="toggles">
    <label>case <input data-whatif="case" value="${escapeHtml(panel.caseId ?? "")}"></label>
    <label>formulary: amoxicillin
      <select data-whatif="formulary:amoxicillin">
        <option value="">(case value)</option>
        <option value="available"${panel.formulary["amoxicillin"] === "available" ? " selected" : ""}>available</option>
        <option value="shortage"${panel.formulary["amoxicillin"] === "shortage" ? " selected" : ""}>shortage</option>
        <option value="unavailable"${panel.formulary["amoxicillin"] === "unavailable" ? " selected" : ""}>unavailable</option>
      </select>
    </label>
    <label>resource tier
      <select data-whatif="context:resource_tier">
        <option value="">(case value)</option>
        <option value="level1"${panel.context["resource_tier"] === "level1" ? " selected" : ""}>level1</option>
        <option value="level2"${panel.context["resource_tier"] === "level2" ? " selected" : ""}>level2</option>
        <option value="level3"${panel.context["resource_tier"] === "level3" ? " selected" : ""}>level3</option>
      </select>
    </label>
    <button data-action="run-whatif">re-score</button>
  </div>`;
  if (!panel.result) {
    return `${errorBanner}${toggles}<div class="empty-state">No what-if run yet.</div>`;
  }
  const { before, after, deltas } = panel.result;
  const rows = deltas.length
    ? deltas.map(deltaRow).join("\n")
    : `<tr><td colspan="4" class="zero-delta">No point changes under this context.</td></tr>`;
  return `${errorBanner}${toggles}
  <dl class="score-compare">
    <dt>before</dt>
    <dd class="score-before">earned ${before.earned} / ${before.max_positive},
      normalized <span class="norm-before">${normalizedLabel(before.normalized)}</span></dd>
    <dt>after</dt>
    <dd class="score-after">earned ${after.earned} / ${after.max_positive},
      normalized <span class="norm-after">${normalizedLabel(after.normalized)}</span></dd>
  </dl>
  <table class="deltas">
    <tr><th>clause</th><th>before</th><th>after</th><th>delta</th></tr>
    ${rows}
  </table>`;
}

// Audit queue view: each sampled item shows the full dialogue, the clause's
// checklist text and verbatim guideline quote (never truncated), the machine
// verdict, and agree/disagree controls.

import type { QueueItem } from "../api.js";
import type { AdjudicationFlow } from "../controllers.js";
import { escapeHtml, num } from "./html.js";

function verdictBadge(item: QueueItem): string {
  if (item.machine_verdict === null) {
    const tie = item.unresolved_tie
      ? ' <span class="badge badge-tie">UNRESOLVED grader tie</span>'
      : "";
    return `<span class="badge badge-unknown">machine: unknown</span>${tie}`;
  }
  const label = item.machine_verdict ? "met" : "unmet";
  return `<span class="badge badge-${label}">machine: ${label}</span>`;
}

function dialogue(item: QueueItem): string {
  const turns = item.turns
    .map(
      (t) =>
        `<div class="turn turn-${t.role}"><span class="role">${t.role}</span> ` +
        `${escapeHtml(t.text)}</div>`,
    )
    .join("");
  return `<div class="dialogue">${turns}</div>`;
}

export function renderQueueItem(item: QueueItem, flow: AdjudicationFlow): string {
  const done = flow.alreadyAdjudicated(item.sample_id);
  const controls = done
    ? `<span class="done-note">already adjudicated in this session</span>`
    : `<button data-action="agree" data-sample="${escapeHtml(item.sample_id)}">agree (a)</button>
       <button data-action="disagree" data-sample="${escapeHtml(item.sample_id)}">disagree (d)</button>
       <input data-note="${escapeHtml(item.sample_id)}" placeholder="note (optional)">`;
  return `
  <article class="queue-item" data-sample-id="${escapeHtml(item.sample_id)}">
    <header>
      <span class="sample-id">${escapeHtml(item.sample_id)}</span>
      <span class="case-id">${escapeHtml(item.case_id)}</span>
      ${verdictBadge(item)}
      <span class="ratio">grader disagreement: ${num(item.disagreement_ratio)}</span>
    </header>
    ${dialogue(item)}
    <section class="clause">
      <a class="trace-link" href="/api/v1/clauses/${encodeURIComponent(item.clause_id)}/trace"
         data-trace="${escapeHtml(item.clause_id)}">${escapeHtml(item.clause_id)}</a>
      <p class="checklist">${escapeHtml(item.checklist_text)}</p>
      <blockquote class="trace-quote">${escapeHtml(item.trace_quote)}</blockquote>
    </section>
    <footer>${controls}</footer>
  </article>`;
}

export function renderQueue(flow: AdjudicationFlow): string {
  if (flow.error) {
    return `<div class="banner banner-error">
      ${escapeHtml(flow.error)}
      <button data-action="retry-queue">retry</button>
    </div>`;
  }
  if (flow.items.length === 0) {
    return `<div class="empty-state">No items pending adjudication.</div>`;
  }
  const items = flow.items.map((item) => renderQueueItem(item, flow)).join("\n");
  return `<div class="queue-meta">${flow.pending} pending of ${flow.total} sampled</div>\n${items}`;
}

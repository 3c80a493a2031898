// What-if contract: the panel displays the engine's per-clause deltas
// verbatim, including the formulary-shortage scenario and clause exclusions.

import { describe, expect, it } from "vitest";

import type { WhatIfResponse } from "../src/api.js";
import { WhatIfPanel } from "../src/controllers.js";
import { renderWhatIf } from "../src/views/whatif.js";
import { FixtureApi, loadFixture } from "./fixtureApi.js";

const SHORTAGE = loadFixture<WhatIfResponse>("whatif_shortage.json");
const IDENTITY = loadFixture<WhatIfResponse>("whatif_identity.json");
const AGE = loadFixture<WhatIfResponse>("whatif_age_out_of_scope.json");

describe("what-if panel", () => {
  it("shows the +2.5 clause delta when the shortage toggle releases the penalty", async () => {
    const panel = new WhatIfPanel(new FixtureApi());
    panel.setCase("case-pneumonia-ke-006");
    panel.setFormulary("amoxicillin", "shortage");
    await panel.run();

    expect(panel.result).toEqual(SHORTAGE);
    const [delta] = panel.result!.deltas;
    expect(delta.delta).toBe(2.5);
    expect(delta.points_before).toBe(-3.0);
    expect(delta.points_after).toBe(-0.5);

    const html = renderWhatIf(panel);
    expect(html).toContain(">+2.5<");
    expect(html).toContain(`>${String(SHORTAGE.before.normalized)}<`);
    expect(html).toContain(`>${String(SHORTAGE.after.normalized)}<`);
  });

  it("renders the zero-delta state when no toggles are set", async () => {
    const panel = new WhatIfPanel(new FixtureApi());
    panel.setCase("case-pneumonia-ke-006");
    await panel.run();
    expect(panel.result).toEqual(IDENTITY);
    expect(panel.result!.deltas).toEqual([]);
    expect(renderWhatIf(panel)).toContain("No point changes");
  });

  it("strikes through clauses the toggle pushed out of scope", async () => {
    const panel = new WhatIfPanel(new FixtureApi());
    panel.setCase("case-pneumonia-ke-006");
    panel.setPatient("age_months", 120);
    await panel.run();
    expect(panel.result).toEqual(AGE);
    const excluded = panel.result!.deltas.filter((d) => !d.applicable_after);
    expect(excluded.length).toBeGreaterThan(0);
    const html = renderWhatIf(panel);
    for (const d of excluded) {
      expect(html).toContain(`<s>${d.clause_id}</s>`);
      expect(html).toContain(`EXCLUDED: ${d.exclusion_reason_after}`);
    }
  });

  it("clears a toggle back to the case value", () => {
    const panel = new WhatIfPanel(new FixtureApi());
    panel.setFormulary("amoxicillin", "shortage");
    panel.setFormulary("amoxicillin", null);
    expect(panel.envDelta).toEqual({});
  });

  it("surfaces API errors inline and keeps toggles editable", async () => {
    const panel = new WhatIfPanel(new FixtureApi());
    panel.setCase("case-unknown");
    panel.setFormulary("amoxicillin", "shortage");
    await panel.run();
    expect(panel.error).toContain("404");
    expect(panel.envDelta.formulary).toEqual({ amoxicillin: "shortage" });
    expect(renderWhatIf(panel)).toContain("banner-error");
  });
});

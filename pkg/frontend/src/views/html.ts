export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

// Numbers are rendered verbatim from API payloads: no rounding, no rescaling.
export function num(value: number | null): string {
  return value === null ? "n/a" : String(value);
}

export function signed(value: number): string {
  return value > 0 ? `+${value}` : String(value);
}

export function normalizedLabel(value: number | "NOT_APPLICABLE"): string {
  return value === "NOT_APPLICABLE" ? "NOT_APPLICABLE" : String(value);
}

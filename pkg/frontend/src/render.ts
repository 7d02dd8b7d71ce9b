import type { AffordancesDoc, NodeDoc, StateDoc } from "./types.js";

/** Framework-free element description: enough to materialize real DOM or to
 * snapshot deterministically in tests. */
export interface ElementDesc {
  tag: string;
  attrs: Record<string, string>;
  text?: string;
  children: ElementDesc[];
}

function el(
  tag: string,
  attrs: Record<string, string> = {},
  children: ElementDesc[] = [],
  text?: string,
): ElementDesc {
  return text === undefined ? { tag, attrs, children } : { tag, attrs, text, children };
}

function str(value: unknown): string {
  if (value === null || value === undefined) return "";
  if (typeof value === "string") return value;
  return JSON.stringify(value);
}

const KNOWN_KINDS = new Set([
  "text",
  "heading",
  "badge",
  "card",
  "table",
  "tab_group",
  "tab",
  "panel",
  "list",
  "map_view",
  "stepper",
  "checklist",
  "image_ref",
  "metric",
]);

export function renderNode(node: NodeDoc): ElementDesc {
  const base = { "data-node-id": node.node_id, "data-kind": node.kind };
  const kids = node.children.map(renderNode);
  const p = node.props;
  switch (node.kind) {
    case "text":
      return el("p", base, kids, str(p.text ?? p.title));
    case "heading": {
      const level = typeof p.level === "number" ? Math.min(Math.max(p.level, 1), 6) : 2;
      return el(`h${level}`, base, kids, str(p.text ?? p.title));
    }
    case "badge":
      return el("span", { ...base, class: "badge" }, kids, str(p.label ?? p.text));
    case "card": {
      const fields = Object.entries(p)
        .filter(([k]) => k !== "title" && k !== "derived")
        .map(([k, v]) => el("div", { class: "field", "data-field": k }, [], str(v)));
      const header = p.title !== undefined ? [el("h3", { class: "card-title" }, [], str(p.title))] : [];
      return el("article", { ...base, class: "card" }, [...header, ...fields, ...kids]);
    }
    case "table": {
      const caption =
        p.title !== undefined ? [el("caption", {}, [], str(p.title))] : [];
      return el("table", base, [...caption, ...kids]);
    }
    case "tab_group": {
      const active = str(p.active_view ?? "");
      const labels = node.children.map((c) =>
        el(
          "button",
          {
            class: "tab-label",
            "data-target": c.node_id,
            "aria-selected": String(c.node_id === active || str(c.props.title) === active),
          },
          [],
          str(c.props.title ?? c.node_id),
        ),
      );
      return el("div", { ...base, class: "tabs" }, [
        el("div", { class: "tab-strip", role: "tablist" }, labels),
        el("div", { class: "tab-panels" }, kids),
      ]);
    }
    case "tab":
      return el("section", { ...base, role: "tabpanel", "data-title": str(p.title) }, kids);
    case "panel":
      return el("div", { ...base, class: "panel" }, kids);
    case "list":
      return el(
        "ul",
        base,
        kids.map((k) => el("li", {}, [k])),
      );
    case "map_view": {
      const pins = node.children.map((c) =>
        el(
          "div",
          { class: "map-pin", "data-node-id": c.node_id },
          [],
          str(c.props.label ?? c.props.title ?? c.node_id),
        ),
      );
      return el("div", { ...base, class: "map", "data-region": str(p.region ?? "") }, pins);
    }
    case "stepper": {
      const steps = kids.map((k, i) =>
        el("li", { class: "step", "data-step-index": String(i + 1) }, [k]),
      );
      return el("ol", { ...base, class: "stepper" }, steps);
    }
    case "checklist": {
      const items = node.children.map((c) =>
        el("li", { class: "check-item", "data-node-id": c.node_id }, [
          el("input", {
            type: "checkbox",
            checked: String(Boolean(c.props.checked ?? c.props.done ?? false)),
          }),
          renderNode(c),
        ]),
      );
      return el("ul", { ...base, class: "checklist" }, items);
    }
    case "image_ref":
      return el("img", { ...base, src: str(p.uri ?? p.src ?? ""), alt: str(p.alt ?? p.title ?? "") });
    case "metric":
      return el("div", { ...base, class: "metric" }, [
        el("div", { class: "metric-title" }, [], str(p.title ?? p.label)),
        el("div", { class: "metric-value" }, [], str(p.value ?? p.rate)),
        ...(p.as_of !== undefined ? [el("div", { class: "metric-asof" }, [], str(p.as_of))] : []),
        ...kids,
      ]);
    default:
      // Forward compatibility: an unrecognized kind renders as a labeled
      // placeholder instead of breaking the page.
      return el(
        "div",
        { ...base, class: "unknown-kind" },
        kids,
        `Unsupported element: ${node.kind}`,
      );
  }
}

export function renderAffordances(aff: AffordancesDoc): ElementDesc {
  const structured = aff.structured.map((a) =>
    el(
      "button",
      {
        class: "affordance",
        "data-affordance-id": a.affordance_id,
        "data-verb": a.verb,
        "data-anchor": a.anchor_node,
      },
      [],
      str(a.resolved_params?.label ?? `${a.verb} ${a.anchor_node}`),
    ),
  );
  const chips = aff.anticipatory.map((a) =>
    el("button", { class: "chip", "data-affordance-id": a.affordance_id }, [], a.label),
  );
  return el("div", { class: "affordance-bar" }, [...structured, ...chips]);
}

/** The natural-language intent bar is always present: the NL channel is never
 * disabled, whatever the current app looks like. */
export function renderIntentBar(): ElementDesc {
  return el("form", { class: "intent-bar" }, [
    el("input", { type: "text", name: "intent", placeholder: "Describe what you want…" }),
    el("button", { type: "submit" }, [], "Send"),
  ]);
}

export function renderState(state: StateDoc): ElementDesc {
  return el(
    "main",
    {
      "data-app-id": state.app_id,
      "data-state-seq": String(state.state_seq),
      "data-content-rev": String(state.content_rev),
    },
    [renderNode(state.view), renderAffordances(state.affordances), renderIntentBar()],
  );
}

export function isKnownKind(kind: string): boolean {
  return KNOWN_KINDS.has(kind);
}

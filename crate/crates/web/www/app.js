import init, { duration_ns, tag_ops, run_scenario, sweep_periods } from "./pkg/fedtime_web.js";

const $ = (sel) => document.querySelector(sel);

function showTag(tag) {
  if (!tag) return "";
  const t = typeof tag.t === "number" ? fmtTime(tag.t) : tag.t;
  const m = tag.m === 4294967295 ? "max" : tag.m;
  return `(${t}, ${m})`;
}

function fmtTime(ns) {
  for (const [unit, scale] of [["s", 1e9], ["ms", 1e6], ["us", 1e3]]) {
    if (ns !== 0 && ns % scale === 0) return `${ns / scale}${unit}`;
  }
  return `${ns}ns`;
}

function guard(fn) {
  return (ev) => {
    ev.preventDefault();
    $("#error").textContent = "";
    try {
      fn(new FormData(ev.target));
    } catch (err) {
      $("#error").textContent = String(err);
    }
  };
}

function config(form, extra = {}) {
  return JSON.stringify({
    scenario: form.get("scenario") ?? "sparse",
    period_ns: duration_ns(form.get("period") ?? "20ms"),
    detection_period_ns: duration_ns(form.get("detection")),
    duration_ns: duration_ns(form.get("duration")),
    dnet: form.get("dnet") === "on",
    latency: form.get("latency") ?? "zero",
    seed: Number(form.get("seed") ?? 0),
    ...extra,
  });
}

function row(cells, cls) {
  const tr = document.createElement("tr");
  if (cls) tr.className = cls;
  for (const c of cells) {
    const td = document.createElement("td");
    if (c instanceof Node) td.append(c); else td.textContent = c;
    tr.append(td);
  }
  return tr;
}

function computeTags(form) {
  const r = JSON.parse(tag_ops(form.get("a"), form.get("b"), form.get("delay")));
  $("#sum").textContent = showTag(r.sum);
  $("#difference").textContent = r.difference ? showTag(r.difference) : r.difference_error;
  $("#delay-tag").textContent = showTag(r.delay_tag);
}

function runScenario(form) {
  const r = JSON.parse(run_scenario(config(form)));
  const s = r.summary;
  $("#run-summary").textContent =
    `${r.scenario}: ${r.outcome}. NET ${s.net_count}, LTC ${s.ltc_count}, TAG ${s.tag_count}, ` +
    `DNET ${s.dnet_count}, MSG ${s.msg_count}` +
    (s.dnet ? `, ${s.reduction_ratio.toFixed(1)}x fewer NETs than without DNET` : "") +
    `. Showing ${r.excerpt.length} of ${r.records} records.`;
  const body = $("#trace tbody");
  body.replaceChildren(...r.excerpt.map((x) =>
    row([x.seq, x.step, x.src, x.dst, x.kind, showTag(x.tag), x.note ?? ""], x.kind)));
}

function bar(value, max, cls) {
  const div = document.createElement("div");
  div.className = `bar ${cls}`;
  div.style.width = `${Math.max(1, (Math.log10(value + 1) / Math.log10(max + 1)) * 14)}rem`;
  return div;
}

function runSweep(form) {
  const rows = JSON.parse(sweep_periods(config(form, { dnet: false }), form.get("periods")));
  const max = Math.max(...rows.map(([base]) => base.net_count));
  const body = $("#sweep-table tbody");
  body.replaceChildren(...rows.map(([base, dnet]) => {
    const bars = document.createElement("div");
    bars.append(bar(base.net_count, max, "base"), bar(dnet.net_count, max, ""));
    return row([fmtTime(base.period_ns), base.net_count, dnet.net_count, `${dnet.reduction_ratio.toFixed(1)}x`, bars]);
  }));
}

await init();
$("#tags form").addEventListener("submit", guard(computeTags));
$("#run form").addEventListener("submit", guard(runScenario));
$("#sweep form").addEventListener("submit", guard(runSweep));
for (const f of document.forms) f.requestSubmit();

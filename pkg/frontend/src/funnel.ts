/**
 * Stage-by-stage funnel view of a cascade trace. The model is a pure
 * transform of the trace payload: counts are read from the payload, never
 * recomputed from decisions, so what the analyst sees is exactly what the
 * server decided.
 */

import { StagePayload, TracePayload } from './api.js';

export interface CandidateChip {
  candidateId: string;
  state: 'kept' | 'removed' | 'flagged';
  reason: string;
}

export interface FunnelRow {
  name: string;
  kind: StagePayload['kind'];
  inputCount: number;
  keptCount: number;
  chips: CandidateChip[];
}

export interface FunnelModel {
  rows: FunnelRow[];
  status: TracePayload['terminal']['status'];
  retrieved: string | null;
  ambiguous: string[];
  fallback: boolean;
  fallbackStage: string | null;
  flags: string[];
  matchScores: [string, number][];
}

export function buildFunnelModel(trace: TracePayload): FunnelModel {
  const rows = trace.stages.map((stage) => ({
    name: stage.name,
    kind: stage.kind,
    inputCount: stage.input.length,
    keptCount: stage.kept.length,
    chips: stage.decisions.map((decision) => ({
      candidateId: decision.candidate_id,
      state: !decision.kept
        ? ('removed' as const)
        : decision.flags && decision.flags.length > 0
          ? ('flagged' as const)
          : ('kept' as const),
      reason: decision.reason,
    })),
  }));
  const terminal = trace.terminal;
  return {
    rows,
    status: terminal.status,
    retrieved: terminal.retrieved,
    ambiguous: terminal.ambiguous,
    fallback: terminal.fallback,
    fallbackStage: terminal.fallback_stage,
    flags: terminal.flags,
    matchScores: terminal.match_scores,
  };
}

const KIND_LABEL: Record<StagePayload['kind'], string> = {
  applied: 'applied',
  verify: 'verify',
  skipped_absent: 'skipped (not described)',
  skipped_early_exit: 'skipped (early exit)',
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/** Render one funnel into `container` (which is cleared first). */
export function renderFunnel(
  container: HTMLElement,
  trace: TracePayload,
  title = 'cascade funnel',
): FunnelModel {
  const model = buildFunnelModel(trace);
  container.textContent = '';
  container.classList.add('funnel');
  container.appendChild(el('h3', 'funnel-title', title));

  const maxInput = Math.max(1, ...model.rows.map((r) => r.inputCount));
  for (const row of model.rows) {
    const rowEl = el('div', `funnel-stage funnel-stage-${row.kind}`);
    rowEl.dataset.stage = row.name;
    rowEl.dataset.kind = row.kind;
    rowEl.dataset.input = String(row.inputCount);
    rowEl.dataset.kept = String(row.keptCount);

    const header = el('div', 'stage-header');
    header.appendChild(el('span', 'stage-name', row.name));
    header.appendChild(el('span', 'stage-kind', KIND_LABEL[row.kind]));
    header.appendChild(
      el('span', 'stage-counts', `${row.inputCount} → ${row.keptCount}`),
    );
    rowEl.appendChild(header);

    if (row.kind === 'applied' || row.kind === 'verify') {
      const bar = el('div', 'stage-bar');
      const keptBar = el('div', 'stage-bar-kept');
      keptBar.style.width = `${(100 * row.keptCount) / maxInput}%`;
      const inputBar = el('div', 'stage-bar-input');
      inputBar.style.width = `${(100 * row.inputCount) / maxInput}%`;
      bar.appendChild(inputBar);
      bar.appendChild(keptBar);
      rowEl.appendChild(bar);

      const chips = el('div', 'stage-chips');
      for (const chip of row.chips) {
        const chipEl = el('span', `chip chip-${chip.state}`, chip.candidateId);
        chipEl.title = chip.reason;
        chips.appendChild(chipEl);
      }
      rowEl.appendChild(chips);
    }
    container.appendChild(rowEl);
  }

  const terminal = el('div', `funnel-terminal terminal-${model.status}`);
  terminal.dataset.status = model.status;
  if (model.status === 'none_retrieved') {
    terminal.appendChild(el('span', 'terminal-status', 'nothing retrieved'));
  } else {
    terminal.appendChild(
      el('span', 'terminal-status', `${model.status}: ${model.retrieved}`),
    );
    if (model.fallback) {
      const badge = el(
        'span',
        'badge badge-fallback',
        `fallback to ${model.fallbackStage}`,
      );
      terminal.appendChild(badge);
    }
    for (const flag of model.flags) {
      terminal.appendChild(el('span', 'badge badge-flag', flag));
    }
    for (const [candidateId, score] of model.matchScores) {
      const scoreEl = el(
        'span',
        candidateId === model.retrieved ? 'match-score match-score-chosen' : 'match-score',
        `${candidateId}: ${score.toFixed(3)}`,
      );
      terminal.appendChild(scoreEl);
    }
  }
  container.appendChild(terminal);
  return model;
}

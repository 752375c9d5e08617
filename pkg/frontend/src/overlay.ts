/**
 * Frame overlay: candidate boxes drawn client-side over the served image.
 * The draw plan is a pure function of server data so it can be tested
 * without a canvas context.
 */

import { FrameDetail, RetrievalResultPayload } from './api.js';

export type BoxRole = 'final' | 'survivor' | 'removed' | 'ground_truth';

export interface BoxDraw {
  candidateId: string | null;
  bbox: [number, number, number, number];
  role: BoxRole;
}

/**
 * One box per candidate plus the ground truth. The retrieved candidate is
 * the only one that may carry the `final` role; candidates the cascade
 * removed can never be rendered as final.
 */
export function computeOverlay(
  frame: FrameDetail,
  result: RetrievalResultPayload | null,
): BoxDraw[] {
  const finalIds = new Set<string>();
  const survivorIds = new Set<string>();
  if (result) {
    if (result.retrieved) finalIds.add(result.retrieved);
    for (const id of result.trace.terminal.ambiguous) survivorIds.add(id);
    const stages = result.trace.stages;
    for (let i = stages.length - 1; i >= 0; i--) {
      if (stages[i].kind === 'applied' || stages[i].kind === 'verify') {
        for (const id of stages[i].kept) survivorIds.add(id);
        break;
      }
    }
  }
  const boxes: BoxDraw[] = frame.candidates.map((candidate) => ({
    candidateId: candidate.candidate_id,
    bbox: candidate.bbox,
    role: finalIds.has(candidate.candidate_id)
      ? ('final' as const)
      : survivorIds.has(candidate.candidate_id)
        ? ('survivor' as const)
        : ('removed' as const),
  }));
  if (frame.ground_truth) {
    boxes.push({ candidateId: null, bbox: frame.ground_truth.bbox, role: 'ground_truth' });
  }
  return boxes;
}

const ROLE_STYLE: Record<BoxRole, { stroke: string; width: number; dash: number[] }> = {
  final: { stroke: '#2ecc40', width: 3, dash: [] },
  survivor: { stroke: '#ffdc00', width: 2, dash: [] },
  removed: { stroke: '#aaaaaa', width: 1, dash: [4, 3] },
  ground_truth: { stroke: '#ff4136', width: 2, dash: [6, 4] },
};

export function drawOverlay(
  canvas: HTMLCanvasElement,
  frame: FrameDetail,
  result: RetrievalResultPayload | null,
): BoxDraw[] {
  const plan = computeOverlay(frame, result);
  const ctx = canvas.getContext('2d');
  if (!ctx) return plan;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (const box of plan) {
    const style = ROLE_STYLE[box.role];
    ctx.strokeStyle = style.stroke;
    ctx.lineWidth = style.width;
    ctx.setLineDash(style.dash);
    const [x, y, w, h] = box.bbox;
    ctx.strokeRect(x, y, w, h);
    if (box.candidateId && box.role !== 'removed') {
      ctx.font = '12px sans-serif';
      ctx.fillStyle = style.stroke;
      ctx.fillText(box.candidateId, x + 2, Math.max(10, y - 4));
    }
  }
  return plan;
}

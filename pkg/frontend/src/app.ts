/**
 * Console wiring: the description form (options populated from the
 * vocabulary endpoint), query submission, the frame viewer and the
 * side-by-side funnel comparison that shows how a refined descriptor
 * narrows the candidate set.
 */

import { ApiClient, ApiError, FrameDetail, QueryResponse, VocabularyResponse } from './api.js';
import { renderFunnel } from './funnel.js';
import { drawOverlay } from './overlay.js';
import { DESCRIPTOR_FIELDS, DescriptorField, optionsForField, QueryFormState, QueryRunner } from './state.js';

export interface ConsoleElements {
  form: HTMLElement;
  sequenceSelect: HTMLSelectElement;
  submitButton: HTMLButtonElement;
  status: HTMLElement;
  frameViewer: HTMLElement;
  frameImage: HTMLImageElement;
  frameCanvas: HTMLCanvasElement;
  frameLabel: HTMLElement;
  prevFrameButton: HTMLButtonElement;
  nextFrameButton: HTMLButtonElement;
  currentFunnel: HTMLElement;
  previousFunnel: HTMLElement;
}

export class ConsoleApp {
  readonly form = new QueryFormState();
  private readonly runner: QueryRunner;
  private vocabulary: VocabularyResponse | null = null;
  private currentResponse: QueryResponse | null = null;
  private previousResponse: QueryResponse | null = null;
  private frameCursor = 0;
  private hasSubmitted = false;

  constructor(
    private readonly client: ApiClient,
    private readonly ui: ConsoleElements,
  ) {
    this.runner = new QueryRunner(client);
  }

  async init(): Promise<void> {
    this.vocabulary = await this.client.getVocabulary();
    const sequences = await this.client.getSequences();
    this.ui.sequenceSelect.textContent = '';
    this.ui.sequenceSelect.appendChild(new Option('select a sequence', ''));
    for (const seq of sequences.sequences) {
      this.ui.sequenceSelect.appendChild(
        new Option(
          `${seq.sequence_id} (${seq.difficulty}, ${seq.frame_count} frames)`,
          seq.sequence_id,
        ),
      );
    }
    this.ui.sequenceSelect.addEventListener('change', () => {
      this.form.sequenceId = this.ui.sequenceSelect.value || null;
      this.refreshSubmittable();
    });
    this.buildDescriptorSelectors();
    this.ui.submitButton.addEventListener('click', () => void this.submit());
    this.ui.prevFrameButton.addEventListener('click', () => this.stepFrame(-1));
    this.ui.nextFrameButton.addEventListener('click', () => this.stepFrame(1));
    this.refreshSubmittable();
  }

  private buildDescriptorSelectors(): void {
    if (!this.vocabulary) return;
    for (const field of DESCRIPTOR_FIELDS) {
      const wrapper = document.createElement('label');
      wrapper.className = 'descriptor-field';
      wrapper.appendChild(document.createTextNode(field.replaceAll('_', ' ')));
      const select = document.createElement('select');
      select.name = field;
      select.appendChild(new Option('(any)', ''));
      for (const option of optionsForField(this.vocabulary, field)) {
        select.appendChild(new Option(option, option));
      }
      select.addEventListener('change', () => {
        this.form.setField(field, select.value || null);
        this.refreshSubmittable();
        if (this.hasSubmitted && this.form.isSubmittable()) {
          // refinement: a single-field change re-queries immediately
          void this.submit();
        }
      });
      wrapper.appendChild(select);
      this.ui.form.appendChild(wrapper);
    }
  }

  private refreshSubmittable(): void {
    this.ui.submitButton.disabled = !this.form.isSubmittable();
  }

  setField(field: DescriptorField, value: string | null): void {
    this.form.setField(field, value);
    const select = this.ui.form.querySelector<HTMLSelectElement>(
      `select[name="${field}"]`,
    );
    if (select) select.value = value ?? '';
    this.refreshSubmittable();
  }

  async submit(): Promise<void> {
    if (!this.form.isSubmittable()) return;
    this.ui.status.textContent = 'querying…';
    this.ui.status.className = 'status status-busy';
    let response: QueryResponse | null;
    try {
      response = await this.runner.run(this.form.toRequest());
    } catch (error) {
      if (error instanceof ApiError) {
        // surface the server's validation message verbatim
        this.ui.status.textContent = error.detail;
        this.ui.status.className = 'status status-error';
      } else {
        this.ui.status.textContent = `network failure: ${String(error)} (retry)`;
        this.ui.status.className = 'status status-error status-retryable';
      }
      return;
    }
    if (response === null) return; // superseded by a newer submission
    this.previousResponse = this.currentResponse;
    this.currentResponse = response;
    this.hasSubmitted = true;
    this.frameCursor = 0;
    this.ui.status.textContent = `${response.results.length} frame(s) evaluated`;
    this.ui.status.className = 'status status-ok';
    this.renderFunnels();
    await this.renderFrame();
  }

  private renderFunnels(): void {
    if (this.currentResponse && this.currentResponse.results.length > 0) {
      const result = this.currentResponse.results[this.frameCursor];
      renderFunnel(
        this.ui.currentFunnel,
        result.trace,
        `current query · frame ${result.frame_index}`,
      );
    }
    if (this.previousResponse && this.previousResponse.results.length > 0) {
      const prev = this.previousResponse.results[
        Math.min(this.frameCursor, this.previousResponse.results.length - 1)
      ];
      renderFunnel(
        this.ui.previousFunnel,
        prev.trace,
        `previous query · frame ${prev.frame_index}`,
      );
      this.ui.previousFunnel.hidden = false;
    } else {
      this.ui.previousFunnel.hidden = true;
      this.ui.previousFunnel.textContent = '';
    }
  }

  private async renderFrame(): Promise<void> {
    if (!this.currentResponse || this.currentResponse.results.length === 0) return;
    const result = this.currentResponse.results[this.frameCursor];
    this.ui.frameLabel.textContent =
      `frame ${result.frame_index} of ${this.currentResponse.sequence_id}`;
    let frame: FrameDetail;
    try {
      frame = await this.client.getFrame(
        this.currentResponse.sequence_id,
        result.frame_index,
      );
    } catch {
      return; // no frame metadata: keep the funnel, skip the viewer
    }
    if (frame.image_url) {
      this.ui.frameImage.src = frame.image_url;
      this.ui.frameImage.hidden = false;
    } else {
      this.ui.frameImage.hidden = true;
    }
    drawOverlay(this.ui.frameCanvas, frame, result);
  }

  private stepFrame(delta: number): void {
    if (!this.currentResponse) return;
    const count = this.currentResponse.results.length;
    if (count === 0) return;
    this.frameCursor = Math.min(Math.max(this.frameCursor + delta, 0), count - 1);
    this.renderFunnels();
    void this.renderFrame();
  }
}

export function mountConsole(client: ApiClient, root: Document = document): ConsoleApp {
  const byId = <T extends HTMLElement>(id: string): T => {
    const node = root.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node as T;
  };
  const app = new ConsoleApp(client, {
    form: byId('descriptor-form'),
    sequenceSelect: byId<HTMLSelectElement>('sequence-select'),
    submitButton: byId<HTMLButtonElement>('submit-query'),
    status: byId('status-line'),
    frameViewer: byId('frame-viewer'),
    frameImage: byId<HTMLImageElement>('frame-image'),
    frameCanvas: byId<HTMLCanvasElement>('frame-canvas'),
    frameLabel: byId('frame-label'),
    prevFrameButton: byId<HTMLButtonElement>('prev-frame'),
    nextFrameButton: byId<HTMLButtonElement>('next-frame'),
    currentFunnel: byId('funnel-current'),
    previousFunnel: byId('funnel-previous'),
  });
  return app;
}
